"""Builds honest certificate chains and single-field forgeries of them.

Every forgery is re-signed at the outer layers with keys the harness holds
(the server key, the verifier key, the attestation authority for genuine
verdicts), so each one trips exactly the check it targets.
"""

from __future__ import annotations

import dataclasses
import random
from dataclasses import dataclass, field

from decent import crypto
from decent.authlist import AuthList, AuthListEntry
from decent.certs import CertChain, ComponentCertificate, SaCertificate, VerifiedAppCertificate
from decent.component import ComponentContext
from decent.corl import CoRL
from decent.errors import RejectReason
from decent.platform import AttestationGroup, Platform, enclave_code, pack_report_data
from decent.testbed import Testbed

R = RejectReason
VERIFIED_ONLY = {R.BadVerifierChain, R.VerifierServiceMismatch}


def flip(b: bytes, rng: random.Random) -> bytes:
    i = rng.randrange(len(b))
    return b[:i] + bytes([b[i] ^ (1 << rng.randrange(8))]) + b[i + 1 :]


@dataclass
class Case:
    chain: CertChain
    keypair: crypto.SigningKeyPair
    expected_service: str
    expected_verifier_service: str | None
    now: float
    corl: frozenset = field(default_factory=frozenset)
    expect: RejectReason | None = None


class ChainLab:
    SERVICES = ("A", "B")

    def __init__(self, seed: int = 0):
        self.rng = random.Random(seed)
        self.tb = tb = Testbed(seed)
        self.authlist = tb.authlist(
            ("AppA", "A"), ("AppB", "B"), ("Verifier", "V"), ("DecentRevoker", "DecentRevoker")
        )
        self.subjects = [
            tb.component("AppA", self.authlist, "p0"),
            tb.component("AppB", self.authlist, "p1"),
        ]
        self.verifier = tb.component("Verifier", self.authlist, "p1")
        # not listed: becomes acceptable as "Dyn" only through the verifier
        self.dynamic = tb.component("AppDyn", self.authlist, "p0")
        verified = VerifiedAppCertificate.issue(self.verifier.keypair, self.dynamic.chain.component, "Dyn")
        self.dynamic.attach_verification(verified, self.verifier.chain)
        self.revoker = tb.component("DecentRevoker", self.authlist, "p1")
        self.client = tb.component("AppB", self.authlist, "p2")
        self.other_key = crypto.SigningKeyPair.generate(self.rng)
        # a platform the authority has revoked, used to obtain a genuine non-OK verdict
        self.bad_group = AttestationGroup("g-revoked", random.Random(seed + 1))
        self.bad_platform = Platform("p-revoked", self.bad_group, tb.clock, random.Random(seed + 2))
        tb.ias.provision(self.bad_platform)
        tb.ias.revoke_platform("p-revoked")

    # -- honest -------------------------------------------------------------

    def honest(self, now: float, verified: bool | None = None) -> Case:
        if verified is None:
            verified = self.rng.random() < 0.3
        if verified:
            c = self.dynamic
            return Case(c.chain, c.keypair, "Dyn", "V", now)
        i = self.rng.randrange(len(self.subjects))
        c = self.subjects[i]
        return Case(c.chain, c.keypair, self.SERVICES[i], self.rng.choice([None, "V"]), now)

    # -- forgeries ----------------------------------------------------------

    def _server_for(self, chain: CertChain):
        for s in self.tb.servers.values():
            if s.sa_cert.server_public_key == chain.sa.server_public_key:
                return s
        raise LookupError("unknown server")

    def _report(self, enclave, key_fp: bytes):
        return self.tb.ias.verify_quote(enclave.create_quote(pack_report_data(key_fp)), self.rng.randbytes(16))

    def _resign_sa(self, chain: CertChain, report=None, nb=None, na=None) -> CertChain:
        server = self._server_for(chain)
        sa = chain.sa
        new = SaCertificate.issue(
            server.keypair,
            report if report is not None else sa.ias_report,
            sa.not_before if nb is None else nb,
            sa.not_after if na is None else na,
        )
        return dataclasses.replace(chain, sa=new)

    def _resign_component(self, chain: CertChain, **changes) -> CertChain:
        server = self._server_for(chain)
        comp = dataclasses.replace(chain.component, **changes)
        comp = ComponentCertificate.issue(
            server.keypair, comp.component_public_key, comp.component_measurement, comp.authlist_bytes, comp.issued_at
        )
        return dataclasses.replace(chain, component=comp)

    def mutate(self, case: Case, reason: RejectReason) -> Case:
        rng, ch = self.rng, case.chain
        server = self._server_for(ch)
        if reason is R.BadSaSignature:
            ch = dataclasses.replace(ch, sa=dataclasses.replace(ch.sa, self_signature=flip(ch.sa.self_signature, rng)))
        elif reason is R.Expired:
            if rng.random() < 0.5:
                ch = self._resign_sa(ch, nb=0.0, na=case.now * rng.uniform(0.0, 0.9))
            else:
                ch = self._resign_sa(ch, nb=case.now + rng.uniform(1.0, 1000.0), na=case.now + 5000.0)
        elif reason is R.BadIasSignature:
            rep = ch.sa.ias_report
            ch = self._resign_sa(ch, report=dataclasses.replace(rep, signature=flip(rep.signature, rng)))
        elif reason is R.IasVerdictNotOk:
            enclave = self.bad_platform.load_enclave(enclave_code(self.tb.server_code), "bad")
            ch = self._resign_sa(ch, report=self._report(enclave, server.keypair.fingerprint))
        elif reason is R.FingerprintMismatch:
            ch = self._resign_sa(ch, report=self._report(server.enclave, self.other_key.fingerprint))
        elif reason is R.ServerNotAuthorized:
            rogue = server.enclave.platform.load_enclave(enclave_code("RogueServer"), "rogue")
            ch = self._resign_sa(ch, report=self._report(rogue, server.keypair.fingerprint))
        elif reason is R.BadComponentSignature:
            comp = ch.component
            ch = dataclasses.replace(ch, component=dataclasses.replace(comp, signature=flip(comp.signature, rng)))
        elif reason is R.AuthListMismatch:
            extra = AuthListEntry(rng.randbytes(32), f"Extra{rng.randrange(1000)}")
            other = AuthList(list(self.authlist.entries) + [extra])
            ch = self._resign_component(ch, authlist_bytes=other.encode())
            if ch.verified is not None:
                ch = self._reverify(ch)
        elif reason is R.ServiceNotAuthorized:
            if ch.verified is not None:
                ch = dataclasses.replace(ch, verified=None, verifier=None)
            else:
                ch = self._resign_component(ch, component_measurement=rng.randbytes(32))
        elif reason is R.BadVerifierChain:
            v = ch.verified
            choice = rng.randrange(3)
            if choice == 0:
                ch = dataclasses.replace(ch, verified=dataclasses.replace(v, signature=flip(v.signature, rng)))
            elif choice == 1:
                ch = dataclasses.replace(ch, verifier=None)
            else:
                # signed by a listed component that is not a verifier
                signer = self.subjects[0]
                forged = VerifiedAppCertificate.issue(signer.keypair, ch.component, v.target_service)
                ch = dataclasses.replace(ch, verified=forged, verifier=signer.chain)
        elif reason is R.VerifierServiceMismatch:
            forged = VerifiedAppCertificate.issue(self.verifier.keypair, ch.component, "Other")
            ch = dataclasses.replace(ch, verified=forged)
        elif reason is R.Revoked:
            targets = [ch.measurement, ch.sa.server_measurement]
            if ch.verifier is not None:
                targets.append(ch.verifier.measurement)
            return dataclasses.replace(case, corl=frozenset({rng.choice(targets)}), expect=reason)
        else:  # pragma: no cover
            raise ValueError(reason)
        return dataclasses.replace(case, chain=ch, expect=reason)

    def _reverify(self, ch: CertChain) -> CertChain:
        v = VerifiedAppCertificate.issue(self.verifier.keypair, ch.component, ch.verified.target_service)
        return dataclasses.replace(ch, verified=v)

    def random_case(self, now: float, p_honest: float = 0.25) -> Case:
        if self.rng.random() < p_honest:
            return self.honest(now)
        reason = self.rng.choice(list(R))
        base = self.honest(now, verified=True if reason in VERIFIED_ONLY else None)
        return self.mutate(base, reason)

    # -- handshake harness ----------------------------------------------------

    def responder_for(self, case: Case) -> ComponentContext:
        """A context presenting ``case.chain`` (it holds the matching private key)."""
        src = self.subjects[0]
        return ComponentContext(
            src.enclave, self.authlist, case.keypair, case.chain, src.authority_key, name="subject"
        )

    def verifying_client(self, corl: frozenset) -> ComponentContext:
        if not corl:
            return self.client
        ctx = self.tb.component("AppB", self.authlist, "p2")
        listing = CoRL.signed(self.revoker.keypair, self.revoker.measurement, 1, sorted(corl))
        assert ctx.apply_corl(listing, self.revoker.keypair.public)
        return ctx
