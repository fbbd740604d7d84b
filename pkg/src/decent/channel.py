"""Mutually authenticated channels between components.

The handshake is written sans-IO: :class:`Initiator` and :class:`Responder`
consume and produce frames, so the same code runs over an in-memory pipe, a
blocking transport or the network simulator (where an adversary sits between
the two sides). Frame layout: u8 type, u32 big-endian length, body.

Full handshake::

    M1  c->s  nonce_c, kex_c, [client chain]
    M2  s->c  nonce_s, kex_s, server chain, want_m3, sig_s(hash(M1 | M2 sans sig))
    M3  c->s  sig_c(hash(M1 | M2))                       (only when want_m3)

Resumption::

    R1  c->s  ticket, nonce_c
    R2  s->c  nonce_s, confirm-MAC over hash(R1 | nonce_s)
"""

from __future__ import annotations

import enum
import queue
import struct
import threading
from dataclasses import dataclass, field
from typing import Callable, Protocol

from . import crypto, tlv
from .certs import CertChain, PeerIdentity, verify_chain
from .errors import (
    AuthFailure,
    ChainRejected,
    DecentError,
    ExpiredTicket,
    HandshakeError,
    MalformedEncoding,
    PeerRejected,
    RejectReason,
    ReplayDetected,
    TranscriptAuthFailure,
    TransportError,
    UnknownTicketKey,
)

VERSION = 1


class FrameType(enum.IntEnum):
    M1 = 1
    M2 = 2
    M3 = 3
    ALERT = 4
    RECORD = 5
    R1 = 6
    R2 = 7
    TICKET = 8


_FRAME_HDR = struct.Struct(">BI")


def frame(ftype: FrameType, body: bytes) -> bytes:
    return _FRAME_HDR.pack(int(ftype), len(body)) + body


def parse_frame(data: bytes) -> tuple[FrameType, bytes]:
    if len(data) < _FRAME_HDR.size:
        raise MalformedEncoding("short frame")
    t, n = _FRAME_HDR.unpack_from(data)
    if len(data) != _FRAME_HDR.size + n:
        raise MalformedEncoding("frame length mismatch")
    try:
        return FrameType(t), data[_FRAME_HDR.size :]
    except ValueError as exc:
        raise MalformedEncoding(f"unknown frame type {t}") from exc


def alert_frame(exc: BaseException) -> bytes:
    reason = exc.reason.name if isinstance(exc, ChainRejected) else type(exc).__name__
    return frame(FrameType.ALERT, reason.encode())


def _expect(data: bytes, want: FrameType) -> bytes:
    ftype, body = parse_frame(data)
    if ftype is FrameType.ALERT:
        raise PeerRejected(body.decode(errors="replace"))
    if ftype is not want:
        raise HandshakeError(f"expected {want.name}, got {ftype.name}")
    return body


class Mode(enum.Enum):
    CONNECT_VERIFY_PEER = "ConnectVerifyPeer"
    ACCEPT_VERIFY_PEER = "AcceptVerifyPeer"
    ACCEPT_OPEN_SERVICE = "AcceptOpenService"


@dataclass
class HandshakeConfig:
    mode: Mode
    expected_peer_service: str | None = None
    expected_verifier_service: str | None = None
    ticket_manager: "TicketManager | None" = None
    verifier_of_verifier_service: str | None = None
    present_chain: bool = True

    @classmethod
    def with_name(cls, mode: Mode, service: str, **kw) -> "HandshakeConfig":
        return cls(mode, service, **kw)

    @classmethod
    def with_verifier(cls, mode: Mode, service: str, verifier_service: str, **kw) -> "HandshakeConfig":
        return cls(mode, service, verifier_service, **kw)


class _Context(Protocol):
    """What the handshake needs from a component (see ComponentContext)."""

    keypair: crypto.SigningKeyPair
    chain: CertChain
    authlist: object
    authority_key: bytes

    def now(self) -> float: ...
    def random_bytes(self, n: int) -> bytes: ...
    def corl_digests(self) -> frozenset: ...
    def exempt_services(self) -> frozenset: ...
    def ensure_running(self) -> None: ...


def _verify_peer(ctx, chain_bytes: bytes, config: HandshakeConfig) -> tuple[PeerIdentity, CertChain]:
    chain = CertChain.decode(chain_bytes)
    return verify_chain(
        chain,
        local_authlist=ctx.authlist,
        expected_service=config.expected_peer_service,
        expected_verifier_service=config.expected_verifier_service,
        verifier_of_verifier_service=config.verifier_of_verifier_service,
        authority_key=ctx.authority_key,
        now=ctx.now(),
        corl=ctx.corl_digests(),
        exempt_services=ctx.exempt_services(),
        open_service=config.mode is Mode.ACCEPT_OPEN_SERVICE,
    ), chain


def _derive_keys(master: bytes, salt: bytes = b"") -> tuple[bytes, bytes]:
    return (
        crypto.hkdf(master, salt, b"c2s", crypto.AEAD_KEY_LEN),
        crypto.hkdf(master, salt, b"s2c", crypto.AEAD_KEY_LEN),
    )


class SecureChannel:
    """AEAD record layer. Nonce = 4-byte direction tag | 8-byte sequence number."""

    def __init__(
        self,
        role: str,
        peer: PeerIdentity | None,
        master_secret: bytes,
        c2s: bytes,
        s2c: bytes,
        ctx=None,
        config: HandshakeConfig | None = None,
        resumed: bool = False,
    ):
        self.role = role
        self.peer = peer
        self.master_secret = master_secret
        if role == "client":
            self.send_key, self.recv_key = c2s, s2c
            self._send_tag, self._recv_tag = b"c2s\0", b"s2c\0"
        else:
            self.send_key, self.recv_key = s2c, c2s
            self._send_tag, self._recv_tag = b"s2c\0", b"c2s\0"
        self.send_seq = 0
        self.recv_seq = 0
        self.ctx = ctx
        self.config = config
        self.resumed = resumed
        self.transport: "Transport | None" = None
        self.closed = False
        self.session_ticket: SessionTicket | None = None

    def __repr__(self) -> str:
        peer = self.peer.service if self.peer else None
        return f"SecureChannel({self.role}, peer={peer!r}, resumed={self.resumed})"

    def _check_open(self) -> None:
        if self.closed:
            raise TransportError("channel closed")
        if self.ctx is not None:
            self.ctx.ensure_running()

    def encrypt(self, plaintext: bytes) -> bytes:
        self._check_open()
        seq = self.send_seq
        hdr = struct.pack(">Q", seq)
        ct = crypto.aead_seal(self.send_key, self._send_tag + hdr, bytes([FrameType.RECORD]) + hdr, plaintext)
        self.send_seq += 1
        return frame(FrameType.RECORD, hdr + ct)

    def decrypt(self, data: bytes) -> bytes:
        self._check_open()
        ftype, body = parse_frame(data)
        if ftype is FrameType.ALERT:
            raise PeerRejected(body.decode(errors="replace"))
        if ftype is FrameType.TICKET:
            return self._accept_ticket(body)
        if ftype is not FrameType.RECORD or len(body) < 8:
            raise MalformedEncoding("not a record")
        hdr, ct = body[:8], body[8:]
        (seq,) = struct.unpack(">Q", hdr)
        if seq != self.recv_seq:
            raise ReplayDetected(f"record sequence {seq}, expected {self.recv_seq}")
        pt = crypto.aead_open(self.recv_key, self._recv_tag + hdr, bytes([FrameType.RECORD]) + hdr, ct)
        self.recv_seq += 1
        return pt

    # -- blocking conveniences ----------------------------------------------

    def send(self, plaintext: bytes) -> None:
        if self.transport is None:
            raise TransportError("channel has no transport")
        self.transport.send(self.encrypt(plaintext))

    def recv(self, timeout: float | None = None) -> bytes:
        if self.transport is None:
            raise TransportError("channel has no transport")
        while True:
            pt = self.decrypt(self.transport.recv(timeout))
            if pt is not None:
                return pt

    def close(self) -> None:
        self.closed = True

    # -- tickets --------------------------------------------------------------

    def issue_ticket(self) -> bytes:
        """Server side: mint a ticket and wrap it in a frame for the client."""
        self._check_open()
        tm = self.config.ticket_manager if self.config else None
        if tm is None:
            raise HandshakeError("no ticket manager configured")
        ticket = tm.issue(self.peer, self.master_secret, self.ctx.now() if self.ctx else tm.clock())
        body = self.encrypt(ticket)
        return frame(FrameType.TICKET, body)

    def _accept_ticket(self, body: bytes) -> None:
        ticket = self.decrypt(body)
        self.session_ticket = SessionTicket(ticket, self.master_secret, self.peer, self.config)
        return None


@dataclass
class SessionTicket:
    """Client-side cache entry: the opaque ticket plus what the client needs to resume."""

    ticket: bytes
    master_secret: bytes = field(repr=False)
    peer: PeerIdentity | None
    config: HandshakeConfig | None = None


def issue_ticket(channel: SecureChannel) -> bytes:
    return channel.issue_ticket()


class Initiator:
    """Client side of the full handshake."""

    def __init__(self, ctx, config: HandshakeConfig):
        if config.mode is not Mode.CONNECT_VERIFY_PEER:
            raise ValueError("initiator must use ConnectVerifyPeer")
        self.ctx = ctx
        self.config = config
        self.channel: SecureChannel | None = None
        self.done = False

    def start(self) -> bytes:
        self.ctx.ensure_running()
        self._nonce = self.ctx.random_bytes(32)
        self._kex = crypto.KexKeyPair.from_private(self.ctx.random_bytes(crypto.KEX_LEN))
        chain = self.ctx.chain.encode() if self.config.present_chain else None
        self._m1 = frame(
            FrameType.M1,
            tlv.pack([(1, tlv.u8(VERSION)), (2, self._nonce), (3, self._kex.public), (4, chain)]),
        )
        return self._m1

    def on_m2(self, data: bytes) -> bytes | None:
        self.ctx.ensure_running()
        body = _expect(data, FrameType.M2)
        f = tlv.unpack(body, [1, 2, 3, 4, 5])
        nonce_s = tlv.fixed(f[1], 32, "nonce")
        kex_s = tlv.fixed(f[2], crypto.KEX_LEN, "key share")
        want_m3 = tlv.read_u8(f[4])
        peer, chain = _verify_peer(self.ctx, f[3], self.config)
        unsigned = tlv.pack([(1, f[1]), (2, f[2]), (3, f[3]), (4, f[4])])
        if not crypto.verify(chain.public_key, b"decent-hs-s\0" + crypto.hash(self._m1 + unsigned), f[5]):
            raise TranscriptAuthFailure("server transcript signature invalid")
        shared = crypto.kex_shared(self._kex.private, kex_s)
        master = crypto.hkdf(shared, self._nonce + nonce_s, b"decent-hs-v1")
        c2s, s2c = _derive_keys(master)
        self.channel = SecureChannel("client", peer, master, c2s, s2c, self.ctx, self.config)
        self.done = True
        if not want_m3:
            return None
        if not self.config.present_chain:
            raise HandshakeError("server requires client authentication")
        sig = crypto.sign(self.ctx.keypair.private, b"decent-hs-c\0" + crypto.hash(self._m1 + data))
        return frame(FrameType.M3, tlv.pack([(1, sig)]))


class Responder:
    """Server side of the full handshake."""

    def __init__(self, ctx, config: HandshakeConfig):
        if config.mode is Mode.CONNECT_VERIFY_PEER:
            raise ValueError("responder must use an Accept mode")
        self.ctx = ctx
        self.config = config
        self.channel: SecureChannel | None = None
        self.done = False

    def on_m1(self, data: bytes) -> bytes:
        self.ctx.ensure_running()
        body = _expect(data, FrameType.M1)
        f = tlv.unpack(body, [1, 2, 3, 4], optional=[4])
        if tlv.read_u8(f[1]) != VERSION:
            raise HandshakeError("unsupported version")
        nonce_c = tlv.fixed(f[2], 32, "nonce")
        kex_c = tlv.fixed(f[3], crypto.KEX_LEN, "key share")
        self._client_chain: CertChain | None = None
        self._peer: PeerIdentity | None = None
        if 4 in f:
            self._peer, self._client_chain = _verify_peer(self.ctx, f[4], self.config)
        elif self.config.mode is not Mode.ACCEPT_OPEN_SERVICE:
            raise ChainRejected(RejectReason.ServiceNotAuthorized, "client presented no chain")
        nonce_s = self.ctx.random_bytes(32)
        kex = self._kex = crypto.KexKeyPair.from_private(self.ctx.random_bytes(crypto.KEX_LEN))
        want_m3 = tlv.u8(1 if self._client_chain is not None else 0)
        unsigned = tlv.pack([(1, nonce_s), (2, kex.public), (3, self.ctx.chain.encode()), (4, want_m3)])
        sig = crypto.sign(self.ctx.keypair.private, b"decent-hs-s\0" + crypto.hash(data + unsigned))
        m2 = frame(FrameType.M2, unsigned + tlv.pack([(5, sig)]))
        shared = crypto.kex_shared(kex.private, kex_c)
        master = crypto.hkdf(shared, nonce_c + nonce_s, b"decent-hs-v1")
        self._keys = (master,) + _derive_keys(master)
        self._transcript = data + m2
        if self._client_chain is None:
            self._finish()
        return m2

    def on_m3(self, data: bytes) -> SecureChannel:
        self.ctx.ensure_running()
        body = _expect(data, FrameType.M3)
        f = tlv.unpack(body, [1])
        if not crypto.verify(
            self._client_chain.public_key, b"decent-hs-c\0" + crypto.hash(self._transcript), f[1]
        ):
            raise TranscriptAuthFailure("client transcript signature invalid")
        return self._finish()

    def _finish(self) -> SecureChannel:
        master, c2s, s2c = self._keys
        self.channel = SecureChannel("server", self._peer, master, c2s, s2c, self.ctx, self.config)
        self.done = True
        return self.channel


# -- session tickets -----------------------------------------------------------


class TicketManager:
    """Issues and opens session tickets; keys rotate every ``rotation`` seconds.

    A key stays usable for one rotation period after it stops being current, so
    every ticket can be redeemed for its whole lifetime.
    """

    def __init__(self, clock: Callable[[], float], rng=None, lifetime: float = 600.0, rotation: float = 3600.0):
        if lifetime > rotation:
            raise ValueError("ticket lifetime must not exceed key rotation period")
        self.clock = clock
        self.rng = rng
        self.lifetime = lifetime
        self.rotation = rotation
        self._keys: dict[int, bytes] = {}
        self._lock = threading.Lock()

    def _key(self, key_id: int, create: bool) -> bytes:
        current = int(self.clock() // self.rotation)
        with self._lock:
            for old in [k for k in self._keys if k < current - 1]:
                del self._keys[old]
            if key_id < current - 1 or key_id > current:
                raise UnknownTicketKey(f"ticket key {key_id} retired")
            if key_id not in self._keys:
                if not create:
                    raise UnknownTicketKey(f"ticket key {key_id} unknown")
                self._keys[key_id] = crypto.random_bytes(crypto.AEAD_KEY_LEN, self.rng)
            return self._keys[key_id]

    def issue(self, peer: PeerIdentity | None, master_secret: bytes, now: float) -> bytes:
        key_id = int(now // self.rotation)
        key = self._key(key_id, create=True)
        with self._lock:
            nonce = crypto.random_bytes(crypto.AEAD_NONCE_LEN, self.rng)
        body = tlv.pack(
            [
                (1, master_secret),
                (2, _encode_peer(peer)),
                (3, tlv.time_to_wire(now)),
                (4, tlv.time_to_wire(now + self.lifetime)),
            ]
        )
        kid = tlv.u64(key_id)
        return kid + nonce + crypto.aead_seal(key, nonce, kid, body)

    def open(self, ticket: bytes, now: float) -> tuple[bytes, PeerIdentity | None, float, float]:
        if len(ticket) < 8 + crypto.AEAD_NONCE_LEN:
            raise UnknownTicketKey("truncated ticket")
        kid, nonce, ct = ticket[:8], ticket[8:20], ticket[20:]
        key = self._key(tlv.read_u64(kid), create=False)
        try:
            body = crypto.aead_open(key, nonce, kid, ct)
        except AuthFailure as exc:
            raise UnknownTicketKey("ticket does not open under its key") from exc
        f = tlv.unpack(body, [1, 2, 3, 4])
        issued, expiry = tlv.time_from_wire(f[3]), tlv.time_from_wire(f[4])
        if now > expiry:
            raise ExpiredTicket(f"ticket expired at {expiry}")
        return f[1], _decode_peer(f[2]), issued, expiry


def _encode_peer(peer: PeerIdentity | None) -> bytes:
    if peer is None:
        return b""
    return tlv.pack(
        [
            (1, peer.measurement),
            (2, peer.public_key),
            (3, (peer.service or "").encode()),
            (4, peer.authlist_hash),
            (5, tlv.u8(int(peer.via_verifier))),
        ]
        + [(6, m) for m in peer.related_measurements]
    )


def _decode_peer(data: bytes) -> PeerIdentity | None:
    if not data:
        return None
    fields = list(tlv.iter_fields(data))
    head = dict(fields[:5])
    related = tuple(v for t, v in fields[5:] if t == 6)
    return PeerIdentity(
        head[1], head[2], head[3].decode() or None, head[4], bool(tlv.read_u8(head[5])), related
    )


def _corl_check(ctx, peer: PeerIdentity | None, service: str | None) -> None:
    if peer is None or service in ctx.exempt_services():
        return
    corl = ctx.corl_digests()
    for m in peer.all_measurements:
        if m in corl:
            raise ChainRejected(RejectReason.Revoked, m.hex())


class ResumeInitiator:
    def __init__(self, ctx, session: SessionTicket, config: HandshakeConfig | None = None):
        self.ctx = ctx
        self.session = session
        self.config = config or session.config
        self.channel: SecureChannel | None = None

    def start(self) -> bytes:
        self.ctx.ensure_running()
        _corl_check(self.ctx, self.session.peer, self.session.peer.service if self.session.peer else None)
        self._nonce = self.ctx.random_bytes(32)
        self._r1 = frame(FrameType.R1, tlv.pack([(1, self.session.ticket), (2, self._nonce)]))
        return self._r1

    def on_r2(self, data: bytes) -> SecureChannel:
        self.ctx.ensure_running()
        f = tlv.unpack(_expect(data, FrameType.R2), [1, 2])
        nonce_s = tlv.fixed(f[1], 32, "nonce")
        salt = self._nonce + nonce_s
        confirm = crypto.hmac256(
            crypto.hkdf(self.session.master_secret, salt, b"resume-confirm"), crypto.hash(self._r1 + nonce_s)
        )
        if not crypto.ct_equal(confirm, f[2]):
            raise TranscriptAuthFailure("resume confirmation invalid")
        c2s, s2c = _derive_keys(crypto.hkdf(self.session.master_secret, salt, b"resume-v1"))
        self.channel = SecureChannel(
            "client", self.session.peer, self.session.master_secret, c2s, s2c, self.ctx, self.config, resumed=True
        )
        self.channel.session_ticket = self.session
        return self.channel


class ResumeResponder:
    def __init__(self, ctx, config: HandshakeConfig):
        if config.ticket_manager is None:
            raise ValueError("resumption requires a ticket manager")
        self.ctx = ctx
        self.config = config
        self.channel: SecureChannel | None = None

    def on_r1(self, data: bytes) -> bytes:
        self.ctx.ensure_running()
        f = tlv.unpack(_expect(data, FrameType.R1), [1, 2])
        nonce_c = tlv.fixed(f[2], 32, "nonce")
        master, peer, _, _ = self.config.ticket_manager.open(f[1], self.ctx.now())
        if self.config.mode is Mode.ACCEPT_VERIFY_PEER and (
            peer is None or peer.service != self.config.expected_peer_service
        ):
            raise ChainRejected(RejectReason.ServiceNotAuthorized, "ticket issued for another service")
        _corl_check(self.ctx, peer, self.config.expected_peer_service)
        nonce_s = self.ctx.random_bytes(32)
        salt = nonce_c + nonce_s
        confirm = crypto.hmac256(crypto.hkdf(master, salt, b"resume-confirm"), crypto.hash(data + nonce_s))
        c2s, s2c = _derive_keys(crypto.hkdf(master, salt, b"resume-v1"))
        self.channel = SecureChannel("server", peer, master, c2s, s2c, self.ctx, self.config, resumed=True)
        return frame(FrameType.R2, tlv.pack([(1, nonce_s), (2, confirm)]))


# -- drivers -------------------------------------------------------------------


class Transport(Protocol):
    def send(self, data: bytes) -> None: ...
    def recv(self, timeout: float | None = None) -> bytes: ...


class QueueTransport:
    """One end of an in-process duplex pipe."""

    def __init__(self, inbox: queue.Queue, outbox: queue.Queue):
        self._in = inbox
        self._out = outbox
        self.sent: list[bytes] = []

    @classmethod
    def pair(cls) -> tuple["QueueTransport", "QueueTransport"]:
        a, b = queue.Queue(), queue.Queue()
        return cls(a, b), cls(b, a)

    def send(self, data: bytes) -> None:
        self.sent.append(data)
        self._out.put(data)

    def recv(self, timeout: float | None = 5.0) -> bytes:
        try:
            return self._in.get(timeout=timeout)
        except queue.Empty as exc:
            raise TransportError("timed out waiting for peer") from exc


def handshake_connect(ctx, transport: Transport, config: HandshakeConfig) -> SecureChannel:
    hs = Initiator(ctx, config)
    transport.send(hs.start())
    try:
        m3 = hs.on_m2(transport.recv())
    except PeerRejected:
        raise
    except DecentError as exc:
        transport.send(alert_frame(exc))
        raise
    if m3 is not None:
        transport.send(m3)
    hs.channel.transport = transport
    return hs.channel


def handshake_accept(ctx, transport: Transport, config: HandshakeConfig) -> SecureChannel:
    """Accept either a full handshake or a ticket resumption."""
    first = transport.recv()
    try:
        ftype, _ = parse_frame(first)
        if ftype is FrameType.R1:
            rs = ResumeResponder(ctx, config)
            transport.send(rs.on_r1(first))
            rs.channel.transport = transport
            return rs.channel
        hs = Responder(ctx, config)
        m2 = hs.on_m1(first)
    except DecentError as exc:
        transport.send(alert_frame(exc))
        raise
    transport.send(m2)
    if not hs.done:
        try:
            hs.on_m3(transport.recv())
        except DecentError as exc:
            if not isinstance(exc, PeerRejected):
                transport.send(alert_frame(exc))
            raise
    hs.channel.transport = transport
    return hs.channel


def resume(ctx, transport: Transport, session: SessionTicket, config: HandshakeConfig | None = None) -> SecureChannel:
    ri = ResumeInitiator(ctx, session, config)
    transport.send(ri.start())
    ch = ri.on_r2(transport.recv())
    ch.transport = transport
    return ch


Tamper = Callable[[str, bytes], "bytes | None"]


def connect_pair(
    client_ctx,
    server_ctx,
    client_config: HandshakeConfig,
    server_config: HandshakeConfig,
    tamper: Tamper | None = None,
) -> tuple[SecureChannel, SecureChannel]:
    """Run a full handshake in memory, optionally passing frames through ``tamper``.

    ``tamper(direction, frame)`` may return replacement bytes or None to drop.
    Raises whichever side's error occurred first.
    """

    def wire(direction: str, data: bytes) -> bytes:
        if tamper is None:
            return data
        out = tamper(direction, data)
        if out is None:
            raise TransportError(f"{direction} frame dropped")
        return out

    ini = Initiator(client_ctx, client_config)
    res = Responder(server_ctx, server_config)
    m2 = res.on_m1(wire("c2s", ini.start()))
    m3 = ini.on_m2(wire("s2c", m2))
    if m3 is not None:
        res.on_m3(wire("c2s", m3))
    elif not res.done:
        raise TransportError("client sent no M3")
    return ini.channel, res.channel


def resume_pair(
    client_ctx, server_ctx, session: SessionTicket, server_config: HandshakeConfig, tamper: Tamper | None = None
) -> tuple[SecureChannel, SecureChannel]:
    def wire(direction, data):
        out = tamper(direction, data) if tamper else data
        if out is None:
            raise TransportError(f"{direction} frame dropped")
        return out

    ri = ResumeInitiator(client_ctx, session)
    rr = ResumeResponder(server_ctx, server_config)
    r2 = rr.on_r1(wire("c2s", ri.start()))
    return ri.on_r2(wire("s2c", r2)), rr.channel
