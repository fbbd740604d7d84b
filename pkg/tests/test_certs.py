import dataclasses
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from chainlab import ChainLab
from decent import crypto
from decent.certs import CertChain, ComponentCertificate, SaCertificate, VerifiedAppCertificate, verify_chain
from decent.errors import ChainRejected, MalformedEncoding, RejectReason

R = RejectReason


@pytest.fixture(scope="module")
def lab():
    return ChainLab(seed=5)


def check(lab, case):
    return verify_chain(
        case.chain,
        local_authlist=lab.authlist,
        expected_service=case.expected_service,
        expected_verifier_service=case.expected_verifier_service,
        authority_key=lab.tb.ias.public_key,
        now=case.now,
        corl=case.corl,
    )


def test_honest_chain_accepted(lab):
    case = lab.honest(lab.tb.clock.now() + 1, verified=False)
    peer = check(lab, case)
    assert peer.service == case.expected_service and not peer.via_verifier


def test_verified_chain_accepted(lab):
    case = lab.honest(lab.tb.clock.now() + 1, verified=True)
    peer = check(lab, case)
    assert peer.via_verifier and peer.service == "Dyn"
    assert lab.verifier.measurement in peer.related_measurements


@pytest.mark.parametrize("reason", list(RejectReason))
def test_each_mutation_trips_its_check(lab, reason):
    now = lab.tb.clock.now() + 10
    base = lab.honest(now, verified=True if reason in (R.BadVerifierChain, R.VerifierServiceMismatch) else None)
    case = lab.mutate(base, reason)
    with pytest.raises(ChainRejected) as exc:
        check(lab, case)
    assert exc.value.reason is reason


def test_chain_encoding_roundtrip(lab):
    for ctx in (lab.subjects[0], lab.dynamic):
        data = ctx.chain.encode()
        assert CertChain.decode(data) == ctx.chain
        assert CertChain.decode(data).encode() == data


def test_single_certs_roundtrip(lab):
    ch = lab.dynamic.chain
    assert SaCertificate.decode(ch.sa.encode()) == ch.sa
    assert ComponentCertificate.decode(ch.component.encode()) == ch.component
    assert VerifiedAppCertificate.decode(ch.verified.encode()) == ch.verified


def test_truncated_chain_rejected(lab):
    data = lab.subjects[0].chain.encode()
    rng = random.Random(1)
    for _ in range(100):
        with pytest.raises(MalformedEncoding):
            CertChain.decode(data[: rng.randrange(len(data))])


def test_reordered_chain_fields_rejected(lab):
    ch = lab.subjects[0].chain
    from decent import tlv

    swapped = tlv.pack([(2, ch.component.encode()), (1, ch.sa.encode())])
    with pytest.raises(MalformedEncoding):
        CertChain.decode(swapped)


@given(st.binary(max_size=200))
def test_garbage_decodes_to_typed_error(data):
    try:
        CertChain.decode(data)
    except MalformedEncoding:
        pass


def test_signature_covers_every_sa_field(lab):
    sa = lab.subjects[0].chain.sa
    for change in (dict(not_before=sa.not_before + 1), dict(not_after=sa.not_after + 1),
                   dict(server_public_key=crypto.SigningKeyPair.generate(random.Random(2)).public)):
        assert not dataclasses.replace(sa, **change).signature_valid()


def test_first_failing_check_wins(lab):
    # a bad SA signature is reported even when the component signature is also broken
    case = lab.mutate(lab.mutate(lab.honest(lab.tb.clock.now()), R.BadComponentSignature), R.BadSaSignature)
    with pytest.raises(ChainRejected) as exc:
        check(lab, case)
    assert exc.value.reason is R.BadSaSignature


def test_open_service_skips_authlist(lab):
    case = lab.mutate(lab.honest(lab.tb.clock.now()), R.AuthListMismatch)
    peer = verify_chain(
        case.chain, local_authlist=lab.authlist, expected_service=None, open_service=True,
        authority_key=lab.tb.ias.public_key, now=case.now,
    )
    assert peer.service is None


def test_revoker_exempt_from_corl(lab):
    rv = lab.revoker.chain
    now = lab.tb.clock.now()
    peer = verify_chain(
        rv, local_authlist=lab.authlist, expected_service="DecentRevoker",
        authority_key=lab.tb.ias.public_key, now=now, corl={rv.measurement, rv.sa.server_measurement},
    )
    assert peer.service == "DecentRevoker"
