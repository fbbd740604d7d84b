"""The Decent Server enclave.

It self-attests once (key pair -> quote over the key fingerprint -> authority
report -> SA certificate) and then issues component certificates to enclaves
on the same platform over a channel keyed by mutual local attestation.

Local attestation exchange::

    LA1  comp -> srv   report_c(data = fp(comp signing key) | hash(kex_c)), kex_c
    LA2  srv -> comp   report_s(data = hash(kex_s)), kex_s
    LA3  comp -> srv   AEAD{comp public key, AuthList bytes}
    LA4  srv -> comp   AEAD{component certificate, SA certificate}
"""

from __future__ import annotations

import threading
from typing import Callable

from . import crypto, tlv
from .authlist import AuthList
from .certs import CertChain, ComponentCertificate, SaCertificate
from .errors import AuthFailure, LaVerifyFailed, SelfAttestFailed
from .ias import AttestationService, Verdict
from .platform import EnclaveHandle, LocalReport, pack_report_data

DEFAULT_LIFETIME = 24 * 3600.0
DEFAULT_REFRESH_FRACTION = 0.5


def self_attest(
    enclave: EnclaveHandle,
    ias: AttestationService,
    keypair: crypto.SigningKeyPair | None = None,
    lifetime: float = DEFAULT_LIFETIME,
) -> tuple[crypto.SigningKeyPair, SaCertificate]:
    keypair = keypair or crypto.SigningKeyPair.from_private(enclave.random_bytes(32))
    quote = enclave.create_quote(pack_report_data(keypair.fingerprint))
    nonce = enclave.random_bytes(16)
    report = ias.verify_quote(quote, nonce)
    if not report.verify(ias.public_key):
        raise SelfAttestFailed("attestation report signature invalid")
    if report.verdict is not Verdict.OK:
        raise SelfAttestFailed(f"attestation verdict {report.verdict.name}")
    if report.nonce != nonce and not ias.replay_mode:
        raise SelfAttestFailed("attestation report nonce mismatch")
    if report.measurement != enclave.measurement:
        raise SelfAttestFailed("attestation report is for another enclave")
    now = enclave.trusted_now()
    return keypair, SaCertificate.issue(keypair, report, now, now + lifetime)


class DecentServer:
    """Server context: key pair, current SA certificate and refresh policy."""

    def __init__(
        self,
        enclave: EnclaveHandle,
        ias: AttestationService,
        lifetime: float = DEFAULT_LIFETIME,
        refresh_fraction: float = DEFAULT_REFRESH_FRACTION,
    ):
        self.enclave = enclave
        self.ias = ias
        self.lifetime = lifetime
        self.refresh_fraction = refresh_fraction
        self._lock = threading.Lock()
        self.keypair, self.sa_cert = self_attest(enclave, ias, lifetime=lifetime)
        self.serving = True
        self.issued: list[ComponentCertificate] = []

    @property
    def platform(self):
        return self.enclave.platform

    def refresh(self) -> SaCertificate:
        """Re-attest with the same key. On failure the server stops issuing."""
        try:
            _, cert = self_attest(self.enclave, self.ias, self.keypair, self.lifetime)
        except SelfAttestFailed:
            with self._lock:
                self.serving = False
            raise
        with self._lock:
            self.sa_cert = cert
            self.serving = True
        return cert

    def refresh_due(self) -> bool:
        sa = self.sa_cert
        return self.enclave.trusted_now() >= sa.not_before + self.refresh_fraction * (sa.not_after - sa.not_before)

    def maybe_refresh(self) -> bool:
        if self.refresh_due():
            self.refresh()
            return True
        return False

    def la_session(self) -> "LaServerSession":
        return LaServerSession(self)

    def _issue(self, public_key: bytes, measurement: bytes, authlist_bytes: bytes) -> tuple[ComponentCertificate, SaCertificate]:
        with self._lock:
            if not self.serving:
                raise SelfAttestFailed("server has no valid SA certificate")
            cert = ComponentCertificate.issue(
                self.keypair, public_key, measurement, authlist_bytes, self.enclave.trusted_now()
            )
            self.issued.append(cert)
            return cert, self.sa_cert


def _la_key(shared: bytes, report_c: bytes, report_s: bytes) -> bytes:
    return crypto.hkdf(shared, crypto.hash(report_c + report_s), b"decent-la-v1")


_NONCE_REQ = b"\0" * 11 + b"\1"
_NONCE_ISSUE = b"\0" * 11 + b"\2"


class LaServerSession:
    """Server half of one local-attestation issuance."""

    def __init__(self, server: DecentServer):
        self.server = server
        self.enclave = server.enclave

    def on_request(self, msg: bytes) -> bytes:
        f = tlv.unpack(msg, [1, 2])
        report_c = LocalReport.decode(f[1])
        kex_c = tlv.fixed(f[2], crypto.KEX_LEN, "key share")
        if not self.enclave.verify_local_report(report_c):
            raise LaVerifyFailed("component report does not verify on this platform")
        if report_c.report_data[32:64] != crypto.hash(kex_c):
            raise LaVerifyFailed("component report does not bind its key share")
        kex = crypto.KexKeyPair.from_private(self.enclave.random_bytes(crypto.KEX_LEN))
        report_s = self.enclave.create_local_report(pack_report_data(crypto.hash(kex.public)))
        self._report_c = report_c
        self._key = _la_key(crypto.kex_shared(kex.private, kex_c), f[1], report_s.encode())
        return tlv.pack([(1, report_s.encode()), (2, kex.public)])

    def on_payload(self, msg: bytes) -> bytes:
        f = tlv.unpack(crypto.aead_open(self._key, _NONCE_REQ, b"la-request", msg), [1, 2])
        public_key = tlv.fixed(f[1], crypto.PUBKEY_LEN, "component key")
        if crypto.fingerprint(public_key) != self._report_c.report_data[:32]:
            raise LaVerifyFailed("component key not bound by its local report")
        authlist = AuthList.decode(f[2])
        cert, sa = self.server._issue(public_key, self._report_c.measurement, authlist.encode())
        body = tlv.pack([(1, cert.encode()), (2, sa.encode())])
        return crypto.aead_seal(self._key, _NONCE_ISSUE, b"la-issue", body)


class LaClientSession:
    """Component half of one local-attestation issuance."""

    def __init__(self, enclave: EnclaveHandle, keypair: crypto.SigningKeyPair, authlist: AuthList):
        self.enclave = enclave
        self.keypair = keypair
        self.authlist = authlist

    def start(self) -> bytes:
        self._kex = crypto.KexKeyPair.from_private(self.enclave.random_bytes(crypto.KEX_LEN))
        report = self.enclave.create_local_report(
            pack_report_data(self.keypair.fingerprint, crypto.hash(self._kex.public))
        )
        self._report = report.encode()
        return tlv.pack([(1, self._report), (2, self._kex.public)])

    def on_reply(self, msg: bytes) -> bytes:
        f = tlv.unpack(msg, [1, 2])
        report_s = LocalReport.decode(f[1])
        kex_s = tlv.fixed(f[2], crypto.KEX_LEN, "key share")
        if not self.enclave.verify_local_report(report_s):
            raise LaVerifyFailed("server report does not verify on this platform")
        if report_s.report_data[:32] != crypto.hash(kex_s):
            raise LaVerifyFailed("server report does not bind its key share")
        self.server_measurement = report_s.measurement
        self._key = _la_key(crypto.kex_shared(self._kex.private, kex_s), self._report, f[1])
        body = tlv.pack([(1, self.keypair.public), (2, self.authlist.encode())])
        return crypto.aead_seal(self._key, _NONCE_REQ, b"la-request", body)

    def on_issue(self, msg: bytes) -> CertChain:
        f = tlv.unpack(crypto.aead_open(self._key, _NONCE_ISSUE, b"la-issue", msg), [1, 2])
        chain = CertChain(SaCertificate.decode(f[2]), ComponentCertificate.decode(f[1]))
        if chain.component.component_public_key != self.keypair.public:
            raise LaVerifyFailed("issued certificate is for another key")
        return chain


LaTamper = Callable[[str, int, bytes], "bytes | None"]


def run_local_attestation(
    enclave: EnclaveHandle,
    keypair: crypto.SigningKeyPair,
    authlist: AuthList,
    server: DecentServer,
    tamper: LaTamper | None = None,
) -> CertChain:
    """Drive LA1-LA4 in memory. ``tamper(direction, step, msg)`` models the host in between."""

    def wire(direction: str, step: int, msg: bytes) -> bytes:
        if tamper is None:
            return msg
        out = tamper(direction, step, msg)
        if out is None:
            raise LaVerifyFailed(f"LA message {step} dropped")
        return out

    client = LaClientSession(enclave, keypair, authlist)
    srv = server.la_session()
    reply = srv.on_request(wire("c2s", 1, client.start()))
    payload = client.on_reply(wire("s2c", 2, reply))
    issued = srv.on_payload(wire("c2s", 3, payload))
    return client.on_issue(wire("s2c", 4, issued))


def la_issue(server: DecentServer, la_transport) -> None:
    """Serve one component over a blocking transport."""
    session = server.la_session()
    la_transport.send(session.on_request(la_transport.recv()))
    la_transport.send(session.on_payload(la_transport.recv()))


__all__ = [
    "AuthFailure",
    "DecentServer",
    "LaClientSession",
    "LaServerSession",
    "la_issue",
    "run_local_attestation",
    "self_attest",
]
