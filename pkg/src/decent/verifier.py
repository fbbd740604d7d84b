"""Verifier: dynamically authorises new components once enough stakeholders approve."""

from __future__ import annotations

import threading
from dataclasses import dataclass

from . import crypto, tlv
from .authlist import check_service_name
from .certs import CertChain, VerifiedAppCertificate, verify_base
from .component import ComponentContext
from .errors import (
    BadSignature,
    ChainRejected,
    DecentError,
    InsufficientApprovals,
    MalformedEncoding,
    RejectReason,
    UnknownStakeholder,
)

APPROVAL_LABEL = b"decent-approval-v1\0"

MSG_APPROVAL = 1
MSG_VERIFY = 2
MSG_RESULT = 3


@dataclass(frozen=True)
class StakeholderApproval:
    stakeholder_public_key: bytes
    approved_measurement: bytes
    target_service: str
    signature: bytes

    def body(self) -> bytes:
        return tlv.pack([(1, self.approved_measurement), (2, self.target_service.encode())])

    @classmethod
    def create(cls, stakeholder: crypto.SigningKeyPair, measurement: bytes, service: str) -> "StakeholderApproval":
        check_service_name(service)
        unsigned = cls(stakeholder.public, measurement, service, b"")
        return cls(stakeholder.public, measurement, service, crypto.sign(stakeholder.private, APPROVAL_LABEL + unsigned.body()))

    def signature_valid(self) -> bool:
        return crypto.verify(self.stakeholder_public_key, APPROVAL_LABEL + self.body(), self.signature)

    def encode(self) -> bytes:
        return tlv.pack([(1, self.stakeholder_public_key), (2, self.body()), (3, self.signature)])

    @classmethod
    def decode(cls, data: bytes) -> "StakeholderApproval":
        f = tlv.unpack(data, [1, 2, 3])
        b = tlv.unpack(f[2], [1, 2])
        try:
            service = check_service_name(b[2].decode("ascii"))
        except (UnicodeDecodeError, ValueError) as exc:
            raise MalformedEncoding("bad service name") from exc
        return cls(f[1], tlv.fixed(b[1], crypto.DIGEST_LEN, "measurement"), service, f[3])


@dataclass(frozen=True)
class VerifierPolicy:
    stakeholder_keys: frozenset[bytes]
    threshold: int

    def __post_init__(self):
        object.__setattr__(self, "stakeholder_keys", frozenset(self.stakeholder_keys))
        if not 1 <= self.threshold <= len(self.stakeholder_keys):
            raise ValueError("threshold must be between 1 and the number of stakeholders")


class Verifier:
    """A verifier component: its own context plus a policy and approval store."""

    def __init__(self, ctx: ComponentContext, policy: VerifierPolicy):
        self.ctx = ctx
        self.policy = policy
        self._approvals: dict[tuple[bytes, str], set[bytes]] = {}
        self._lock = threading.Lock()
        self.issued: list[VerifiedAppCertificate] = []

    def submit_approval(self, approval: StakeholderApproval) -> None:
        self.ctx.ensure_running()
        if approval.stakeholder_public_key not in self.policy.stakeholder_keys:
            raise UnknownStakeholder(approval.stakeholder_public_key.hex()[:16])
        if not approval.signature_valid():
            raise BadSignature("approval signature invalid")
        with self._lock:
            key = (approval.approved_measurement, approval.target_service)
            self._approvals.setdefault(key, set()).add(approval.stakeholder_public_key)

    def approvals(self, measurement: bytes, service: str) -> int:
        with self._lock:
            return len(self._approvals.get((measurement, service), ()))

    def request_verification(self, candidate: CertChain, target_service: str) -> VerifiedAppCertificate:
        """Vet ``candidate`` (checks (a)-(f) against our AuthList), then sign it for ``target_service``."""
        self.ctx.ensure_running()
        check_service_name(target_service)
        verify_base(candidate, self.ctx.authlist, target_service, self.ctx.authority_key, self.ctx.now())
        if candidate.component.authlist_bytes != self.ctx.authlist.encode():
            raise ChainRejected(RejectReason.AuthListMismatch, "verifiers only vouch for their own instance")
        have = self.approvals(candidate.measurement, target_service)
        if have < self.policy.threshold:
            raise InsufficientApprovals(f"{have} of {self.policy.threshold} approvals")
        cert = VerifiedAppCertificate.issue(self.ctx.keypair, candidate.component, target_service)
        with self._lock:
            self.issued.append(cert)
        return cert

    # -- wire protocol (carried inside a secure channel) ------------------------

    def handle_message(self, msg: bytes) -> bytes:
        try:
            kind = tlv.read_u8(next(tlv.iter_fields(msg))[1])
            if kind == MSG_APPROVAL:
                f = tlv.unpack(msg, [1, 2])
                self.submit_approval(StakeholderApproval.decode(f[2]))
                return result_message(True)
            if kind == MSG_VERIFY:
                f = tlv.unpack(msg, [1, 2, 3])
                cert = self.request_verification(CertChain.decode(f[2]), f[3].decode("ascii"))
                return result_message(True, cert.encode(), self.ctx.chain.encode())
            raise MalformedEncoding(f"unknown verifier message {kind}")
        except (DecentError, StopIteration, UnicodeDecodeError, ValueError) as exc:
            return result_message(False, error=_error_name(exc))


def _error_name(exc: BaseException) -> str:
    if isinstance(exc, ChainRejected):
        return exc.reason.name
    return type(exc).__name__


def approval_message(approval: StakeholderApproval) -> bytes:
    return tlv.pack([(1, tlv.u8(MSG_APPROVAL)), (2, approval.encode())])


def verification_message(chain: CertChain, target_service: str) -> bytes:
    return tlv.pack([(1, tlv.u8(MSG_VERIFY)), (2, chain.encode()), (3, target_service.encode())])


def result_message(ok: bool, cert: bytes | None = None, verifier_chain: bytes | None = None, error: str = "") -> bytes:
    return tlv.pack(
        [(1, tlv.u8(MSG_RESULT)), (2, tlv.u8(int(ok))), (3, cert), (4, verifier_chain), (5, error.encode() or None)]
    )


def parse_result(msg: bytes) -> tuple[VerifiedAppCertificate, CertChain] | str | None:
    """A (certificate, verifier chain) pair, None for a bare success, or the error name."""
    f = tlv.unpack(msg, [1, 2, 3, 4, 5], optional=[3, 4, 5])
    if tlv.read_u8(f[1]) != MSG_RESULT:
        raise MalformedEncoding("not a verifier result")
    if not tlv.read_u8(f[2]):
        return f.get(5, b"").decode(errors="replace")
    if 3 in f:
        return VerifiedAppCertificate.decode(f[3]), CertChain.decode(f[4])
    return None
