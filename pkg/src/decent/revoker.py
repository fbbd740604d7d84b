"""Revoker: keeps the signed, append-only component revocation list."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterable

from . import crypto
from .authlist import DECENT_REVOKER
from .certs import CertChain, verify_base
from .component import ComponentContext
from .corl import CoRL, parse_poll_request, parse_poll_reply, poll_reply, poll_request
from .errors import (
    BadSignature,
    ChainRejected,
    DecentError,
    EvidenceInvalid,
    MalformedEncoding,
    RevocationProhibited,
    UnknownStakeholder,
)
from .verifier import VerifierPolicy

REQUEST_LABEL = b"decent-revocation-request-v1\0"
EVIDENCE_LABEL = b"decent-key-evidence-v1\0"

RevokerPolicy = VerifierPolicy


@dataclass(frozen=True)
class RevocationRequest:
    stakeholder_public_key: bytes
    target_measurement: bytes
    signature: bytes

    @classmethod
    def create(cls, stakeholder: crypto.SigningKeyPair, target: bytes) -> "RevocationRequest":
        return cls(stakeholder.public, target, crypto.sign(stakeholder.private, REQUEST_LABEL + target))

    def signature_valid(self) -> bool:
        return crypto.verify(self.stakeholder_public_key, REQUEST_LABEL + self.target_measurement, self.signature)


class Revoker:
    """A revoker component. Revokers (and configured protected names) cannot be revoked."""

    def __init__(
        self,
        ctx: ComponentContext,
        policy: RevokerPolicy,
        protected_services: Iterable[str] = (),
    ):
        self.ctx = ctx
        self.policy = policy
        self.protected_services = frozenset({DECENT_REVOKER} | set(protected_services))
        self._lock = threading.Lock()
        self._requests: dict[bytes, set[bytes]] = {}
        self._entries: list[bytes] = []
        self._corl = CoRL.signed(ctx.keypair, ctx.measurement, 0, ())
        self.history: list[CoRL] = [self._corl]

    @property
    def identity(self) -> bytes:
        return self.ctx.measurement

    def _check_revocable(self, target: bytes) -> None:
        for service in self.ctx.authlist.services_of(target):
            if service in self.protected_services:
                raise RevocationProhibited(f"{target.hex()[:16]} is a {service}")

    def _append(self, target: bytes) -> bool:
        with self._lock:
            if target in self._entries:
                return False
            self._entries.append(target)
            self._corl = CoRL.signed(self.ctx.keypair, self.identity, self._corl.seq + 1, self._entries)
            self.history.append(self._corl)
            return True

    def submit_revocation(self, request: RevocationRequest) -> bool:
        """Record one stakeholder request; returns True when it pushed the digest onto the list."""
        self.ctx.ensure_running()
        if request.stakeholder_public_key not in self.policy.stakeholder_keys:
            raise UnknownStakeholder(request.stakeholder_public_key.hex()[:16])
        if not request.signature_valid():
            raise BadSignature("revocation request signature invalid")
        target = request.target_measurement
        self._check_revocable(target)
        with self._lock:
            if target in self._entries:
                return False
            votes = self._requests.setdefault(target, set())
            votes.add(request.stakeholder_public_key)
            reached = len(votes) >= self.policy.threshold
        return self._append(target) if reached else False

    def submit_key_evidence(self, private_key_bytes: bytes, claimed_chain: CertChain) -> bytes:
        """Revoke the component whose private key was disclosed. Returns its measurement."""
        self.ctx.ensure_running()
        try:
            leaked = crypto.SigningKeyPair.from_private(bytes(private_key_bytes))
        except (ValueError, TypeError) as exc:
            raise EvidenceInvalid("not a private key") from exc
        probe = EVIDENCE_LABEL + self.ctx.random_bytes(32)
        if not crypto.verify(claimed_chain.public_key, probe, crypto.sign(leaked.private, probe)):
            raise EvidenceInvalid("key does not match the claimed chain")
        try:
            verify_base(claimed_chain, self.ctx.authlist, "", self.ctx.authority_key, self.ctx.now())
        except ChainRejected as exc:
            raise EvidenceInvalid(f"claimed chain invalid: {exc}") from exc
        target = claimed_chain.measurement
        self._check_revocable(target)
        self._append(target)
        return target

    def get_corl(self, since_seq: int = 0) -> CoRL:
        # the full list is always returned; since_seq only lets callers skip work
        with self._lock:
            return self._corl

    def handle_poll(self, msg: bytes) -> bytes:
        self.ctx.ensure_running()
        return poll_reply(self.get_corl(parse_poll_request(msg)))


def fetch_over_channel(ctx: ComponentContext, channel) -> tuple[CoRL, bytes] | None:
    """Client side of one poll over an established channel to a revoker."""
    view = ctx.corl_view(channel.peer.measurement) if channel.peer else None
    channel.send(poll_request(view.seq if view else 0))
    try:
        corl = parse_poll_reply(channel.recv())
    except (MalformedEncoding, DecentError):
        return None
    if corl.revoker_identity != channel.peer.measurement:
        return None
    return corl, channel.peer.public_key


def local_endpoint(revoker: Revoker, service: str = DECENT_REVOKER):
    """An in-process poll endpoint running a real handshake against ``revoker``."""
    from .channel import connect_pair

    def fetch(ctx: ComponentContext):
        client, server = connect_pair(
            ctx, revoker.ctx, ctx.connect_config(service), revoker.ctx.accept_config(open_service=True)
        )
        reply = server.encrypt(revoker.handle_poll(server.decrypt(client.encrypt(poll_request(0)))))
        corl = parse_poll_reply(client.decrypt(reply))
        if corl.revoker_identity != client.peer.measurement:
            return None
        return corl, client.peer.public_key

    return fetch


__all__ = [
    "CoRL",
    "RevocationRequest",
    "Revoker",
    "RevokerPolicy",
    "fetch_over_channel",
    "local_endpoint",
]
