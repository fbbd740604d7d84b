"""Component runtime: certificate acquisition, channels, sealing, revocation polling."""

from __future__ import annotations

import enum
import random
import threading
import weakref
from dataclasses import dataclass, field
from typing import Callable, Iterable

from . import crypto, tlv
from .authlist import DECENT_REVOKER, AuthList
from .certs import DEFAULT_EXEMPT, CertChain, VerifiedAppCertificate
from .channel import (
    HandshakeConfig,
    Initiator,
    Mode,
    Responder,
    SecureChannel,
    TicketManager,
    handshake_accept,
    handshake_connect,
)
from .corl import CoRL
from .errors import ComponentShutDown, DecentError
from .platform import EnclaveHandle, SealPolicy
from .server import DecentServer, LaTamper, run_local_attestation

SEAL_LABEL = b"decent-seal"


class State(enum.Enum):
    RUNNING = "Running"
    SHUT_DOWN = "ShutDown"


@dataclass(frozen=True)
class RevokerConfig:
    services: tuple[str, ...] = (DECENT_REVOKER,)
    poll_interval: float = 5.0
    max_missed: int = 3


@dataclass(frozen=True)
class SealedBlob:
    label: bytes
    nonce: bytes
    ciphertext: bytes

    def encode(self) -> bytes:
        return tlv.pack([(1, self.label), (2, self.nonce), (3, self.ciphertext)])

    @classmethod
    def decode(cls, data: bytes) -> "SealedBlob":
        f = tlv.unpack(data, [1, 2, 3])
        return cls(f[1], tlv.fixed(f[2], crypto.AEAD_NONCE_LEN, "nonce"), f[3])


@dataclass
class _RevokerView:
    corl: CoRL | None = None
    public_key: bytes | None = None


@dataclass
class _Liveness:
    last_success: float
    missed: int = 0
    pending_since: float | None = field(default=None)


class ComponentContext:
    """Everything an enclave component holds after start-up.

    The AuthList is fixed for the lifetime of the context. Once shut down
    (revocation polling failed too often) every operation raises
    :class:`ComponentShutDown`.
    """

    def __init__(
        self,
        enclave: EnclaveHandle,
        authlist: AuthList,
        keypair: crypto.SigningKeyPair,
        chain: CertChain,
        authority_key: bytes,
        *,
        name: str | None = None,
        revoker_config: RevokerConfig | None = None,
        exempt_services: Iterable[str] = (),
        ticket_lifetime: float = 600.0,
        ticket_rotation: float = 3600.0,
    ):
        self.enclave = enclave
        self._authlist = authlist
        self.keypair = keypair
        self._chain = chain
        self.authority_key = authority_key
        self.name = name or f"component-{chain.measurement.hex()[:8]}"
        self.revoker_config = revoker_config or RevokerConfig()
        self._exempt = frozenset(DEFAULT_EXEMPT | set(exempt_services))
        self.state = State.RUNNING
        self._lock = threading.RLock()
        self._channels: weakref.WeakSet[SecureChannel] = weakref.WeakSet()
        self._views: dict[bytes, _RevokerView] = {}
        self._corl_cache: frozenset[bytes] = frozenset()
        self._liveness: dict[str, _Liveness] = {}
        self.on_shutdown: list[Callable[["ComponentContext"], None]] = []
        ticket_rng = random.Random(int.from_bytes(self.random_bytes(8), "big")) if enclave.rng else None
        self.ticket_manager = TicketManager(self.now, ticket_rng, ticket_lifetime, ticket_rotation)

    def __repr__(self) -> str:
        return f"ComponentContext({self.name!r}, {self.state.value})"

    # -- identity --------------------------------------------------------------

    @property
    def authlist(self) -> AuthList:
        return self._authlist

    @property
    def chain(self) -> CertChain:
        return self._chain

    @property
    def measurement(self) -> bytes:
        return self.enclave.measurement

    @property
    def platform(self):
        return self.enclave.platform

    @property
    def rng(self) -> random.Random | None:
        return self.enclave.rng

    def now(self) -> float:
        return self.enclave.trusted_now()

    def random_bytes(self, n: int) -> bytes:
        return self.enclave.random_bytes(n)

    def exempt_services(self) -> frozenset[str]:
        return self._exempt

    def ensure_running(self) -> None:
        if self.state is not State.RUNNING:
            raise ComponentShutDown(self.name)

    def refresh_chain(self, server: DecentServer, tamper: LaTamper | None = None) -> CertChain:
        """Fetch a new component certificate (e.g. after the server re-attested)."""
        self.ensure_running()
        fresh = run_local_attestation(self.enclave, self.keypair, self._authlist, server, tamper)
        with self._lock:
            old = self._chain
            self._chain = fresh if old.verified is None else fresh.with_verification(old.verified, old.verifier)
        return self._chain

    def attach_verification(self, verified: VerifiedAppCertificate, verifier_chain: CertChain) -> CertChain:
        self.ensure_running()
        with self._lock:
            self._chain = self._chain.with_verification(verified, verifier_chain)
        return self._chain

    # -- channels --------------------------------------------------------------

    def connect_config(
        self,
        expected_service: str,
        expected_verifier_service: str | None = None,
        verifier_of_verifier_service: str | None = None,
        present_chain: bool = True,
    ) -> HandshakeConfig:
        return HandshakeConfig(
            Mode.CONNECT_VERIFY_PEER,
            expected_service,
            expected_verifier_service,
            None,
            verifier_of_verifier_service,
            present_chain,
        )

    def accept_config(
        self,
        expected_service: str | None = None,
        expected_verifier_service: str | None = None,
        open_service: bool = False,
        verifier_of_verifier_service: str | None = None,
    ) -> HandshakeConfig:
        mode = Mode.ACCEPT_OPEN_SERVICE if open_service else Mode.ACCEPT_VERIFY_PEER
        if mode is Mode.ACCEPT_VERIFY_PEER and expected_service is None:
            raise ValueError("AcceptVerifyPeer needs an expected peer service")
        return HandshakeConfig(
            mode,
            expected_service,
            expected_verifier_service,
            self.ticket_manager,
            verifier_of_verifier_service,
        )

    def initiator(self, config: HandshakeConfig) -> Initiator:
        self.ensure_running()
        return Initiator(self, config)

    def responder(self, config: HandshakeConfig) -> Responder:
        self.ensure_running()
        return Responder(self, config)

    def track(self, channel: SecureChannel | None) -> SecureChannel | None:
        if channel is not None:
            with self._lock:
                if self.state is not State.RUNNING:
                    channel.close()
                    raise ComponentShutDown(self.name)
                self._channels.add(channel)
        return channel

    def connect(self, transport, expected_service: str, expected_verifier_service: str | None = None) -> SecureChannel:
        self.ensure_running()
        config = self.connect_config(expected_service, expected_verifier_service)
        return self.track(handshake_connect(self, transport, config))

    def accept(self, transport, config: HandshakeConfig) -> SecureChannel:
        self.ensure_running()
        return self.track(handshake_accept(self, transport, config))

    def open_channels(self) -> list[SecureChannel]:
        with self._lock:
            return [c for c in self._channels if not c.closed]

    # -- sealing ---------------------------------------------------------------

    def _seal_key(self, label: bytes) -> bytes:
        base = self.enclave.derive_seal_key(SealPolicy.BY_MEASUREMENT, SEAL_LABEL)
        return crypto.hkdf(base, self._authlist.hash, label)

    def _seal_ad(self, label: bytes) -> bytes:
        return self.measurement + self._authlist.hash + label

    def seal(self, label: bytes, plaintext: bytes) -> SealedBlob:
        self.ensure_running()
        nonce = self.random_bytes(crypto.AEAD_NONCE_LEN)
        ct = crypto.aead_seal(self._seal_key(label), nonce, self._seal_ad(label), plaintext)
        return SealedBlob(label, nonce, ct)

    def unseal(self, blob: SealedBlob) -> bytes:
        self.ensure_running()
        return crypto.aead_open(self._seal_key(blob.label), blob.nonce, self._seal_ad(blob.label), blob.ciphertext)

    def seal_ikm(self) -> bytes:
        """Key material other modules derive stable identities from (never leaves the enclave)."""
        self.ensure_running()
        return self.enclave.derive_seal_key(SealPolicy.BY_MEASUREMENT, SEAL_LABEL)

    # -- revocation --------------------------------------------------------------

    def corl_digests(self) -> frozenset[bytes]:
        return self._corl_cache

    def corl_view(self, revoker_identity: bytes) -> CoRL | None:
        view = self._views.get(revoker_identity)
        return view.corl if view else None

    def apply_corl(self, corl: CoRL, revoker_public_key: bytes) -> bool:
        """Install a CoRL fetched over an authenticated channel to a revoker.

        Returns False (and changes nothing) for a bad signature, a rollback or
        a list that is not an append-only extension of the one already held.
        """
        self.ensure_running()
        if not corl.signature_valid(revoker_public_key):
            return False
        with self._lock:
            view = self._views.setdefault(corl.revoker_identity, _RevokerView())
            if view.corl is not None and not corl.extends(view.corl):
                return False
            view.corl = corl
            view.public_key = revoker_public_key
            self._corl_cache = frozenset(e for v in self._views.values() if v.corl for e in v.corl.entries)
        return True

    def _live(self, key: str) -> _Liveness:
        if key not in self._liveness:
            self._liveness[key] = _Liveness(self.now())
        return self._liveness[key]

    def poll_started(self, revoker: str = DECENT_REVOKER) -> None:
        with self._lock:
            live = self._live(revoker)
            if live.pending_since is None:
                live.pending_since = self.now()

    def poll_succeeded(self, revoker: str = DECENT_REVOKER) -> None:
        with self._lock:
            live = self._live(revoker)
            live.last_success = self.now()
            live.missed = 0
            live.pending_since = None

    def poll_failed(self, revoker: str = DECENT_REVOKER) -> None:
        with self._lock:
            live = self._live(revoker)
            live.missed += 1
            live.pending_since = None
        self.check_liveness()

    def record_poll(self, revoker: str, corl: CoRL | None, revoker_public_key: bytes | None = None) -> bool:
        """Outcome of one poll round: a CoRL (to verify) or None for no reply."""
        if self.state is not State.RUNNING:
            return False
        ok = corl is not None and revoker_public_key is not None and self.apply_corl(corl, revoker_public_key)
        if ok:
            self.poll_succeeded(revoker)
        else:
            self.poll_failed(revoker)
        return ok

    def liveness_deadline(self) -> float:
        """Time by which some poll to every revoker must have succeeded."""
        cfg = self.revoker_config
        with self._lock:
            lasts = [self._live(s).last_success for s in cfg.services]
        return min(lasts) + cfg.max_missed * cfg.poll_interval

    def check_liveness(self) -> bool:
        """Shut down after ``max_missed`` consecutive misses or a silent deadline."""
        if self.state is not State.RUNNING:
            return False
        cfg = self.revoker_config
        with self._lock:
            dead = any(self._live(s).missed >= cfg.max_missed for s in cfg.services)
            dead = dead or self.now() >= self.liveness_deadline()
        if dead:
            self.shut_down()
        return not dead

    def shut_down(self) -> None:
        with self._lock:
            if self.state is State.SHUT_DOWN:
                return
            self.state = State.SHUT_DOWN
            channels = list(self._channels)
        for ch in channels:
            ch.close()
        for cb in self.on_shutdown:
            cb(self)


def component_init(
    enclave: EnclaveHandle,
    authlist: AuthList,
    server: DecentServer,
    *,
    authority_key: bytes | None = None,
    tamper: LaTamper | None = None,
    **kwargs,
) -> ComponentContext:
    """Generate a key pair inside the enclave and obtain a chain from the local server."""
    keypair = crypto.SigningKeyPair.from_private(enclave.random_bytes(32))
    chain = run_local_attestation(enclave, keypair, authlist, server, tamper)
    key = authority_key if authority_key is not None else server.ias.public_key
    return ComponentContext(enclave, authlist, keypair, chain, key, **kwargs)


def poll_revocations(ctx: ComponentContext, revoker_endpoints) -> None:
    """One poll round against every configured revoker.

    ``revoker_endpoints`` maps a revoker service name to a callable that takes
    the polling context and returns ``(CoRL, revoker public key)`` or None.
    """
    ctx.ensure_running()
    for service in ctx.revoker_config.services:
        fetch = revoker_endpoints.get(service)
        ctx.poll_started(service)
        try:
            result = fetch(ctx) if fetch else None
        except DecentError:  # any failure to obtain a list is a miss
            result = None
        if result is None:
            ctx.record_poll(service, None)
        else:
            ctx.record_poll(service, *result)
        if ctx.state is not State.RUNNING:
            return
