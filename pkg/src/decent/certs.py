"""Certificates and the chain verifier.

A chain is SA certificate (server key bound to an attestation report) ->
component certificate (component key, measurement and AuthList, signed by the
server) -> optional verified-app certificate (signed by a verifier, whose own
chain travels alongside).

Byte layouts are TLV (see :mod:`decent.tlv`); every signature is taken over
the TLV body prefixed with a per-type domain-separation label.
"""

from __future__ import annotations

import collections
from dataclasses import dataclass, field
from typing import Collection

from . import crypto, tlv
from .authlist import DECENT_REVOKER, DECENT_SERVER, AuthList, check_service_name
from .errors import ChainRejected, MalformedEncoding, RejectReason
from .ias import IasReport, Verdict

SA_LABEL = b"decent-sa-cert-v1\0"
COMPONENT_LABEL = b"decent-component-cert-v1\0"
VERIFIED_LABEL = b"decent-verified-cert-v1\0"

DEFAULT_EXEMPT = frozenset({DECENT_REVOKER})

# instrumentation: the ticket-resumption tests assert that no chain was verified
stats: collections.Counter = collections.Counter()


@dataclass(frozen=True)
class SaCertificate:
    server_public_key: bytes
    ias_report: IasReport
    not_before: float
    not_after: float
    self_signature: bytes

    @property
    def server_measurement(self) -> bytes:
        return self.ias_report.measurement

    def body(self) -> bytes:
        return tlv.pack(
            [
                (1, self.server_public_key),
                (2, self.ias_report.encode()),
                (3, tlv.time_to_wire(self.not_before)),
                (4, tlv.time_to_wire(self.not_after)),
            ]
        )

    def encode(self) -> bytes:
        return self.body() + tlv.pack([(5, self.self_signature)])

    @classmethod
    def decode(cls, data: bytes) -> "SaCertificate":
        f = tlv.unpack(data, [1, 2, 3, 4, 5])
        return cls(
            tlv.fixed(f[1], crypto.PUBKEY_LEN, "server key"),
            IasReport.decode(f[2]),
            tlv.time_from_wire(f[3]),
            tlv.time_from_wire(f[4]),
            f[5],
        )

    @classmethod
    def issue(cls, keypair: crypto.SigningKeyPair, report: IasReport, not_before: float, not_after: float):
        nb = tlv.time_from_wire(tlv.time_to_wire(not_before))
        na = tlv.time_from_wire(tlv.time_to_wire(not_after))
        unsigned = cls(keypair.public, report, nb, na, b"")
        return cls(keypair.public, report, nb, na, crypto.sign(keypair.private, SA_LABEL + unsigned.body()))

    def signature_valid(self) -> bool:
        return crypto.verify(self.server_public_key, SA_LABEL + self.body(), self.self_signature)


@dataclass(frozen=True)
class ComponentCertificate:
    component_public_key: bytes
    component_measurement: bytes
    authlist_bytes: bytes
    issued_at: float
    signature: bytes

    def body(self) -> bytes:
        return tlv.pack(
            [
                (1, self.component_public_key),
                (2, self.component_measurement),
                (3, self.authlist_bytes),
                (4, tlv.time_to_wire(self.issued_at)),
            ]
        )

    def encode(self) -> bytes:
        return self.body() + tlv.pack([(5, self.signature)])

    @classmethod
    def decode(cls, data: bytes) -> "ComponentCertificate":
        f = tlv.unpack(data, [1, 2, 3, 4, 5])
        return cls(
            tlv.fixed(f[1], crypto.PUBKEY_LEN, "component key"),
            tlv.fixed(f[2], crypto.DIGEST_LEN, "measurement"),
            f[3],
            tlv.time_from_wire(f[4]),
            f[5],
        )

    @classmethod
    def issue(cls, server_keypair, component_public_key, measurement, authlist_bytes, issued_at):
        ts = tlv.time_from_wire(tlv.time_to_wire(issued_at))
        unsigned = cls(component_public_key, measurement, authlist_bytes, ts, b"")
        sig = crypto.sign(server_keypair.private, COMPONENT_LABEL + unsigned.body())
        return cls(component_public_key, measurement, authlist_bytes, ts, sig)

    def signature_valid(self, server_public_key: bytes) -> bool:
        return crypto.verify(server_public_key, COMPONENT_LABEL + self.body(), self.signature)


@dataclass(frozen=True)
class VerifiedAppCertificate:
    component_public_key: bytes
    component_measurement: bytes
    authlist_bytes: bytes
    target_service: str
    signature: bytes

    def body(self) -> bytes:
        return tlv.pack(
            [
                (1, self.component_public_key),
                (2, self.component_measurement),
                (3, self.authlist_bytes),
                (4, self.target_service.encode()),
            ]
        )

    def encode(self) -> bytes:
        return self.body() + tlv.pack([(5, self.signature)])

    @classmethod
    def decode(cls, data: bytes) -> "VerifiedAppCertificate":
        f = tlv.unpack(data, [1, 2, 3, 4, 5])
        try:
            service = check_service_name(f[4].decode("ascii"))
        except (UnicodeDecodeError, ValueError) as exc:
            raise MalformedEncoding("bad target service") from exc
        return cls(
            tlv.fixed(f[1], crypto.PUBKEY_LEN, "component key"),
            tlv.fixed(f[2], crypto.DIGEST_LEN, "measurement"),
            f[3],
            service,
            f[5],
        )

    @classmethod
    def issue(cls, verifier_keypair, component: ComponentCertificate, target_service: str):
        check_service_name(target_service)
        unsigned = cls(
            component.component_public_key,
            component.component_measurement,
            component.authlist_bytes,
            target_service,
            b"",
        )
        sig = crypto.sign(verifier_keypair.private, VERIFIED_LABEL + unsigned.body())
        return cls(
            component.component_public_key,
            component.component_measurement,
            component.authlist_bytes,
            target_service,
            sig,
        )

    def signature_valid(self, verifier_public_key: bytes) -> bool:
        return crypto.verify(verifier_public_key, VERIFIED_LABEL + self.body(), self.signature)


@dataclass(frozen=True)
class CertChain:
    sa: SaCertificate
    component: ComponentCertificate
    verified: VerifiedAppCertificate | None = None
    verifier: "CertChain | None" = None

    def encode(self) -> bytes:
        return tlv.pack(
            [
                (1, self.sa.encode()),
                (2, self.component.encode()),
                (3, self.verified.encode() if self.verified else None),
                (4, self.verifier.encode() if self.verifier else None),
            ]
        )

    @classmethod
    def decode(cls, data: bytes, _depth: int = 0) -> "CertChain":
        if _depth > 2:
            raise MalformedEncoding("verifier chains nested too deeply")
        f = tlv.unpack(data, [1, 2, 3, 4], optional=[3, 4])
        return cls(
            SaCertificate.decode(f[1]),
            ComponentCertificate.decode(f[2]),
            VerifiedAppCertificate.decode(f[3]) if 3 in f else None,
            cls.decode(f[4], _depth + 1) if 4 in f else None,
        )

    @property
    def measurement(self) -> bytes:
        return self.component.component_measurement

    @property
    def public_key(self) -> bytes:
        return self.component.component_public_key

    @property
    def authlist_hash(self) -> bytes:
        return crypto.hash(self.component.authlist_bytes)

    def with_verification(self, verified: VerifiedAppCertificate, verifier: "CertChain") -> "CertChain":
        return CertChain(self.sa, self.component, verified, verifier)


@dataclass(frozen=True)
class PeerIdentity:
    measurement: bytes
    public_key: bytes
    service: str | None
    authlist_hash: bytes
    via_verifier: bool
    # every measurement the acceptance depended on (server, verifier, ...);
    # consulted again when a session is resumed from a ticket
    related_measurements: tuple[bytes, ...] = field(default=())

    @property
    def all_measurements(self) -> tuple[bytes, ...]:
        return (self.measurement,) + self.related_measurements


def _reject(reason: RejectReason, detail: str = "") -> ChainRejected:
    return ChainRejected(reason, detail)


def _check_server(chain: CertChain, local: AuthList | None, authority_key: bytes, now: float) -> None:
    """Steps (a)-(e): server certificate, attestation report, component signature."""
    sa = chain.sa
    if not sa.signature_valid():
        raise _reject(RejectReason.BadSaSignature)
    if not (sa.not_before <= now <= sa.not_after):
        raise _reject(RejectReason.Expired, f"now={now} window=[{sa.not_before}, {sa.not_after}]")
    if not sa.ias_report.verify(authority_key):
        raise _reject(RejectReason.BadIasSignature)
    if sa.ias_report.verdict is not Verdict.OK:
        raise _reject(RejectReason.IasVerdictNotOk, sa.ias_report.verdict.name)
    if sa.ias_report.report_data[:32] != crypto.fingerprint(sa.server_public_key):
        raise _reject(RejectReason.FingerprintMismatch)
    if local is not None and not local.authorizes(sa.server_measurement, DECENT_SERVER):
        raise _reject(RejectReason.ServerNotAuthorized, sa.server_measurement.hex())
    if not chain.component.signature_valid(sa.server_public_key):
        raise _reject(RejectReason.BadComponentSignature)


def _check_authlist(chain: CertChain, local: AuthList, expected_service: str) -> None:
    """Step (f): byte-equal AuthList, or the nested definition for an open service."""
    carried = chain.component.authlist_bytes
    if carried == local.encode():
        return
    nested = local.nested_definition(chain.measurement, expected_service)
    if nested is not None and carried == nested.encode():
        return
    raise _reject(RejectReason.AuthListMismatch)


def verify_base(chain: CertChain, local: AuthList, expected_service: str, authority_key: bytes, now: float) -> None:
    """Steps (a)-(f) only; used by verifiers vetting a candidate."""
    _check_server(chain, local, authority_key, now)
    _check_authlist(chain, local, expected_service)


def _check_verifier(
    chain: CertChain,
    verifier_chain: CertChain | None,
    local: AuthList,
    expected_service: str,
    expected_verifier_service: str,
    verifier_of_verifier_service: str | None,
    authority_key: bytes,
    now: float,
) -> list[bytes]:
    """Verified-app path of step (g). Returns the measurements relied upon."""
    v = chain.verified
    comp = chain.component
    if verifier_chain is None:
        raise _reject(RejectReason.BadVerifierChain, "no verifier chain presented")
    if (
        v.component_public_key != comp.component_public_key
        or v.component_measurement != comp.component_measurement
        or v.authlist_bytes != comp.authlist_bytes
    ):
        raise _reject(RejectReason.BadVerifierChain, "verified certificate inconsistent with component")
    relied: list[bytes]
    try:
        verify_base(verifier_chain, local, expected_verifier_service, authority_key, now)
        relied = [verifier_chain.measurement, verifier_chain.sa.server_measurement]
        if not local.authorizes(verifier_chain.measurement, expected_verifier_service):
            if verifier_chain.verified is None or verifier_of_verifier_service is None:
                raise _reject(RejectReason.ServiceNotAuthorized, "verifier not listed")
            # one extra level: the verifier was itself authorised by a directly listed verifier
            relied += _check_verifier(
                verifier_chain,
                verifier_chain.verifier,
                local,
                expected_verifier_service,
                verifier_of_verifier_service,
                None,
                authority_key,
                now,
            )
    except ChainRejected as exc:
        raise _reject(RejectReason.BadVerifierChain, f"verifier chain: {exc}") from exc
    if not v.signature_valid(verifier_chain.public_key):
        raise _reject(RejectReason.BadVerifierChain, "verified certificate signature invalid")
    if v.target_service != expected_service:
        raise _reject(
            RejectReason.VerifierServiceMismatch, f"{v.target_service} != {expected_service}"
        )
    return relied


def verify_chain(
    chain: CertChain,
    verifier_chain: CertChain | None = None,
    *,
    local_authlist: AuthList,
    expected_service: str | None,
    authority_key: bytes,
    now: float,
    expected_verifier_service: str | None = None,
    corl: Collection[bytes] = (),
    exempt_services: Collection[str] = DEFAULT_EXEMPT,
    verifier_of_verifier_service: str | None = None,
    open_service: bool = False,
) -> PeerIdentity:
    """Run handshake checks (a)-(h) in order; the first failure raises ChainRejected.

    With ``open_service`` only signatures and the attestation report are checked
    and the returned identity carries no service.
    """
    stats["verify_chain"] += 1
    if verifier_chain is None:
        verifier_chain = chain.verifier
    if open_service:
        _check_server(chain, None, authority_key, now)
        return PeerIdentity(
            chain.measurement, chain.public_key, None, chain.authlist_hash, False,
            (chain.sa.server_measurement,),
        )
    _check_server(chain, local_authlist, authority_key, now)
    _check_authlist(chain, local_authlist, expected_service)

    relied = [chain.sa.server_measurement]
    via_verifier = False
    if not local_authlist.authorizes(chain.measurement, expected_service):
        if chain.verified is None or expected_verifier_service is None:
            raise _reject(RejectReason.ServiceNotAuthorized, expected_service)
        relied += _check_verifier(
            chain,
            verifier_chain,
            local_authlist,
            expected_service,
            expected_verifier_service,
            verifier_of_verifier_service,
            authority_key,
            now,
        )
        via_verifier = True

    if expected_service not in exempt_services and corl:
        for m in [chain.measurement] + relied:
            if m in corl:
                raise _reject(RejectReason.Revoked, m.hex())

    return PeerIdentity(
        chain.measurement, chain.public_key, expected_service, chain.authlist_hash, via_verifier,
        tuple(relied),
    )
