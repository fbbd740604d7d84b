"""Exception hierarchy shared by every layer of the package."""

from __future__ import annotations

import enum


class DecentError(Exception):
    """Base class for all errors raised by this package."""


class MalformedEncoding(DecentError):
    """Bytes do not decode to a canonical value."""


class AuthFailure(DecentError):
    """AEAD open failed: wrong key, or modified ciphertext / nonce / associated data."""


class RejectReason(enum.Enum):
    BadSaSignature = 1
    Expired = 2
    BadIasSignature = 3
    IasVerdictNotOk = 4
    FingerprintMismatch = 5
    ServerNotAuthorized = 6
    BadComponentSignature = 7
    AuthListMismatch = 8
    ServiceNotAuthorized = 9
    BadVerifierChain = 10
    VerifierServiceMismatch = 11
    Revoked = 12


class ChainRejected(DecentError):
    """A certificate chain failed verification."""

    def __init__(self, reason: RejectReason, detail: str = ""):
        self.reason = reason
        self.detail = detail
        super().__init__(f"{reason.name}: {detail}" if detail else reason.name)


class HandshakeError(DecentError):
    """Handshake aborted for a reason other than chain rejection."""


class TranscriptAuthFailure(HandshakeError):
    pass


class PeerRejected(HandshakeError):
    """The remote side aborted the handshake and told us why."""

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(f"peer rejected handshake: {reason}")


class TransportError(DecentError):
    pass


class ReplayDetected(DecentError):
    pass


class ExpiredTicket(DecentError):
    pass


class UnknownTicketKey(DecentError):
    pass


class SelfAttestFailed(DecentError):
    pass


class LaVerifyFailed(DecentError):
    pass


class ComponentShutDown(DecentError):
    """Operation attempted on a context that has shut itself down."""


class UnknownStakeholder(DecentError):
    pass


class BadSignature(DecentError):
    pass


class InsufficientApprovals(DecentError):
    pass


class EvidenceInvalid(DecentError):
    pass


class RevocationProhibited(DecentError):
    pass


class UnknownGroup(DecentError):
    pass


class KeyNotFound(DecentError, KeyError):
    pass


class LookupFailed(DecentError):
    pass


class NotLeakable(DecentError):
    pass
