"""What the adversary knows, closed under the derivations it can perform.

The closure rules are deliberately the only ones available:

* split frames and TLV structures into their fields,
* open AEAD records (and LA payloads) with keys it owns,
* complete a key exchange when it owns one private half, deriving the same
  session keys the honest side would,
* derive resumption keys from a ticket whose master secret it knows,
* sign with private keys it owns (``can_sign``).

Anything else, such as a ciphertext under a key it never learned, stays opaque.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .. import crypto, tlv
from ..channel import FrameType, parse_frame
from ..errors import AuthFailure, MalformedEncoding

_TAGS = (b"c2s\0", b"s2c\0")
_LA_NONCES = ((b"\0" * 11 + b"\1", b"la-request"), (b"\0" * 11 + b"\2", b"la-issue"))


@dataclass
class _Handshake:
    m1: tuple[bytes, bytes] | None = None  # (nonce_c, kex_c)
    m2: tuple[bytes, bytes] | None = None  # (nonce_s, kex_s)
    r1: tuple[bytes, bytes] | None = None  # (ticket, nonce_c)
    r2: bytes | None = None  # nonce_s
    done: bool = False


@dataclass
class _LaSession:
    first: tuple[bytes, bytes] | None = None  # (report bytes, kex)
    second: tuple[bytes, bytes] | None = None
    done: bool = False


@dataclass
class KnowledgeSet:
    terms: set[bytes] = field(default_factory=set)
    aead_keys: set[bytes] = field(default_factory=set)
    signing_keys: dict[bytes, bytes] = field(default_factory=dict)  # public -> private
    kex_privates: dict[bytes, bytes] = field(default_factory=dict)  # public -> private
    masters: set[bytes] = field(default_factory=set)

    def __post_init__(self):
        self._pending: list[bytes] = []
        self._records: list[bytes] = []  # RECORD frames still unopened
        self._la_sealed: list[bytes] = []
        self._handshakes: dict[int, _Handshake] = {}
        self._la: dict[int, _LaSession] = {}
        self._ticket_master: dict[bytes, bytes] = {}
        self._conn_master: dict[int, bytes] = {}
        self._record_conn: dict[bytes, int] = {}
        self._ticket_records: set[bytes] = set()
        self._dirty = False

    # -- input -----------------------------------------------------------------

    def add(self, term: bytes) -> None:
        if term and term not in self.terms:
            self._pending.append(bytes(term))
            self._dirty = True

    def add_aead_key(self, key: bytes) -> None:
        if key not in self.aead_keys:
            self.aead_keys.add(key)
            self.add(key)
            self._dirty = True

    def add_signing_key(self, private: bytes) -> None:
        kp = crypto.SigningKeyPair.from_private(private)
        self.signing_keys[kp.public] = kp.private
        self.add(private)

    def add_kex_private(self, private: bytes) -> None:
        kp = crypto.KexKeyPair.from_private(private)
        self.kex_privates[kp.public] = kp.private
        self.add(private)
        self._dirty = True

    def observe_frame(self, conn_id: int, data: bytes, purpose: str = "app") -> None:
        """Record one frame seen on the wire (channel frames or raw LA messages)."""
        self.add(data)
        if purpose == "la":
            self._observe_la(conn_id, data)
            return
        try:
            ftype, body = parse_frame(data)
        except MalformedEncoding:
            return
        hs = self._handshakes.setdefault(conn_id, _Handshake())
        try:
            if ftype is FrameType.M1:
                f = tlv.unpack(body, [1, 2, 3, 4], optional=[4])
                hs.m1 = (f[2], f[3])
            elif ftype is FrameType.M2:
                f = tlv.unpack(body, [1, 2, 3, 4, 5])
                hs.m2 = (f[1], f[2])
            elif ftype is FrameType.R1:
                f = tlv.unpack(body, [1, 2])
                hs.r1 = (f[1], f[2])
            elif ftype is FrameType.R2:
                f = tlv.unpack(body, [1, 2])
                hs.r2 = f[1]
            elif ftype is FrameType.RECORD:
                self._records.append(data)
            elif ftype is FrameType.TICKET:
                self._records.append(body)
                self._ticket_records.add(body)
                self._record_conn.setdefault(body, conn_id)
        except MalformedEncoding:
            pass
        self._dirty = True

    def _observe_la(self, sid: int, data: bytes) -> None:
        la = self._la.setdefault(sid, _LaSession())
        try:
            f = tlv.unpack(data, [1, 2])
        except MalformedEncoding:
            self._la_sealed.append(data)
            return
        if len(f[2]) != crypto.KEX_LEN:
            return
        if la.first is None:
            la.first = (f[1], f[2])
        elif la.second is None:
            la.second = (f[1], f[2])

    # -- closure ---------------------------------------------------------------

    def saturate(self) -> None:
        while self._dirty:
            self._dirty = False
            while self._pending:
                term = self._pending.pop()
                if term in self.terms:
                    continue
                self.terms.add(term)
                self._split(term)
            self._complete_handshakes()
            self._complete_la()
            self._open_records()

    def _split(self, term: bytes) -> None:
        try:
            _, body = parse_frame(term)
            self.add(body)
            return
        except MalformedEncoding:
            pass
        try:
            parts = list(tlv.iter_fields(term))
        except MalformedEncoding:
            return
        if parts and sum(5 + len(v) for _, v in parts) == len(term):
            for _, v in parts:
                self.add(v)

    def _shared(self, pub_a: bytes, pub_b: bytes) -> bytes | None:
        for mine, theirs in ((pub_a, pub_b), (pub_b, pub_a)):
            priv = self.kex_privates.get(mine)
            if priv is not None:
                try:
                    return crypto.kex_shared(priv, theirs)
                except MalformedEncoding:
                    return None
        return None

    def _learn_master(self, conn_id: int | None, master: bytes, salt: bytes = b"", info_resume: bool = False) -> None:
        if info_resume:
            session = crypto.hkdf(master, salt, b"resume-v1")
        else:
            session = master
            self.masters.add(master)
            if conn_id is not None:
                self._conn_master[conn_id] = master
        self.add(master)
        self.add_aead_key(crypto.hkdf(session, b"", b"c2s", crypto.AEAD_KEY_LEN))
        self.add_aead_key(crypto.hkdf(session, b"", b"s2c", crypto.AEAD_KEY_LEN))

    def _complete_handshakes(self) -> None:
        for cid, hs in self._handshakes.items():
            if hs.done:
                continue
            if hs.m1 and hs.m2:
                shared = self._shared(hs.m1[1], hs.m2[1])
                if shared is not None:
                    self.add(shared)
                    self._learn_master(cid, crypto.hkdf(shared, hs.m1[0] + hs.m2[0], b"decent-hs-v1"))
                    hs.done = True
            elif hs.r1 and hs.r2:
                master = self._ticket_master.get(hs.r1[0])
                if master is not None:
                    self._learn_master(cid, master, hs.r1[1] + hs.r2, info_resume=True)
                    hs.done = True

    def _complete_la(self) -> None:
        for la in self._la.values():
            if la.done or not (la.first and la.second):
                continue
            shared = self._shared(la.first[1], la.second[1])
            if shared is not None:
                key = crypto.hkdf(shared, crypto.hash(la.first[0] + la.second[0]), b"decent-la-v1")
                self.add_aead_key(key)
                la.done = True

    def _open_records(self) -> None:
        remaining = []
        for rec in self._records:
            pt = self._try_open(rec)
            if pt is None:
                remaining.append(rec)
                continue
            self.add(pt)
            cid = self._record_conn.get(rec)
            if rec in self._ticket_records and cid in self._conn_master:
                # a ticket delivered on a connection whose master we know
                self._ticket_master.setdefault(pt, self._conn_master[cid])
        self._records = remaining
        sealed = []
        for ct in self._la_sealed:
            pt = None
            for key in self.aead_keys:
                for nonce, ad in _LA_NONCES:
                    try:
                        pt = crypto.aead_open(key, nonce, ad, ct)
                        break
                    except AuthFailure:
                        continue
                if pt is not None:
                    break
            if pt is None:
                sealed.append(ct)
            else:
                self.add(pt)
        self._la_sealed = sealed

    def _try_open(self, rec: bytes) -> bytes | None:
        try:
            ftype, body = parse_frame(rec)
        except MalformedEncoding:
            return None
        if ftype is not FrameType.RECORD or len(body) < 8:
            return None
        hdr, ct = body[:8], body[8:]
        ad = bytes([FrameType.RECORD]) + hdr
        for key in self.aead_keys:
            for tag in _TAGS:
                try:
                    return crypto.aead_open(key, tag + hdr, ad, ct)
                except AuthFailure:
                    continue
        return None

    # -- queries ---------------------------------------------------------------

    def knows(self, secret: bytes) -> bool:
        """True if ``secret`` occurs inside anything the adversary can derive."""
        self.saturate()
        return any(secret in t for t in self.terms)

    def can_sign(self, public_key: bytes) -> bool:
        return public_key in self.signing_keys

    def sign(self, public_key: bytes, msg: bytes) -> bytes:
        return crypto.sign(self.signing_keys[public_key], msg)

    def __contains__(self, secret: bytes) -> bool:
        return self.knows(secret)

    def __len__(self) -> int:
        self.saturate()
        return len(self.terms)


def seq_of(record_frame: bytes) -> int:
    _, body = parse_frame(record_frame)
    return struct.unpack(">Q", body[:8])[0]
