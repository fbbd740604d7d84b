"""Mutual attestation for distributed enclave applications, on simulated SGX-like platforms."""

from .authlist import AuthList, AuthListEntry
from .certs import CertChain, ComponentCertificate, SaCertificate, VerifiedAppCertificate, verify_chain
from .channel import SecureChannel, connect_pair
from .component import ComponentContext, SealedBlob
from .corl import CoRL
from .errors import ChainRejected, DecentError, RejectReason
from .revoker import Revoker
from .server import DecentServer
from .testbed import Testbed
from .verifier import Verifier

__version__ = "0.1.0"

__all__ = [
    "AuthList",
    "AuthListEntry",
    "CertChain",
    "ChainRejected",
    "CoRL",
    "ComponentCertificate",
    "ComponentContext",
    "DecentError",
    "DecentServer",
    "RejectReason",
    "Revoker",
    "SaCertificate",
    "SealedBlob",
    "SecureChannel",
    "Testbed",
    "VerifiedAppCertificate",
    "Verifier",
    "connect_pair",
    "verify_chain",
]
