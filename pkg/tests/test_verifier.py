import random

import pytest

from decent import crypto
from decent.certs import verify_chain
from decent.channel import connect_pair
from decent.errors import BadSignature, ChainRejected, InsufficientApprovals, RejectReason, UnknownStakeholder
from decent.testbed import Testbed
from decent.verifier import (
    StakeholderApproval,
    Verifier,
    VerifierPolicy,
    approval_message,
    parse_result,
    verification_message,
)


@pytest.fixture
def env():
    tb = Testbed(seed=31)
    rng = random.Random(4)
    keys = [crypto.SigningKeyPair.generate(rng) for _ in range(3)]
    al = tb.authlist(("AppA", "A"), ("Verifier", "V"))
    v = Verifier(tb.component("Verifier", al, "p0"), VerifierPolicy(frozenset(k.public for k in keys), 2))
    cand = tb.component("NewApp", al, "p1")
    return tb, al, keys, v, cand


def test_threshold_enforced(env):
    tb, al, keys, v, cand = env
    v.submit_approval(StakeholderApproval.create(keys[0], cand.measurement, "Dyn"))
    with pytest.raises(InsufficientApprovals):
        v.request_verification(cand.chain, "Dyn")
    # the same stakeholder twice still counts once
    v.submit_approval(StakeholderApproval.create(keys[0], cand.measurement, "Dyn"))
    assert v.approvals(cand.measurement, "Dyn") == 1
    v.submit_approval(StakeholderApproval.create(keys[1], cand.measurement, "Dyn"))
    cert = v.request_verification(cand.chain, "Dyn")
    assert cert.signature_valid(v.ctx.keypair.public)


def test_approval_is_per_service(env):
    tb, al, keys, v, cand = env
    for k in keys[:2]:
        v.submit_approval(StakeholderApproval.create(k, cand.measurement, "Dyn"))
    with pytest.raises(InsufficientApprovals):
        v.request_verification(cand.chain, "Other")


def test_unknown_and_forged_approvals(env):
    tb, al, keys, v, cand = env
    outsider = crypto.SigningKeyPair.generate(random.Random(9))
    with pytest.raises(UnknownStakeholder):
        v.submit_approval(StakeholderApproval.create(outsider, cand.measurement, "Dyn"))
    import dataclasses

    good = StakeholderApproval.create(keys[0], cand.measurement, "Dyn")
    with pytest.raises(BadSignature):
        v.submit_approval(dataclasses.replace(good, target_service="Evil"))


def test_candidate_with_other_authlist_refused(env):
    tb, al, keys, v, cand = env
    stranger = tb.component("NewApp", tb.authlist(("NewApp", "Dyn")), "p1")
    for k in keys[:2]:
        v.submit_approval(StakeholderApproval.create(k, stranger.measurement, "Dyn"))
    with pytest.raises(ChainRejected) as exc:
        v.request_verification(stranger.chain, "Dyn")
    assert exc.value.reason is RejectReason.AuthListMismatch


def test_verified_component_is_accepted_by_peers(env):
    tb, al, keys, v, cand = env
    for k in keys[:2]:
        v.submit_approval(StakeholderApproval.create(k, cand.measurement, "Dyn"))
    cand.attach_verification(v.request_verification(cand.chain, "Dyn"), v.ctx.chain)
    a = tb.component("AppA", al, "p2")
    with pytest.raises(ChainRejected):
        connect_pair(a, cand, a.connect_config("Dyn"), cand.accept_config("A"))
    c, s = connect_pair(a, cand, a.connect_config("Dyn", "V"), cand.accept_config("A"))
    assert c.peer.via_verifier


def test_message_protocol(env):
    tb, al, keys, v, cand = env
    for k in keys[:2]:
        assert parse_result(v.handle_message(approval_message(StakeholderApproval.create(k, cand.measurement, "Dyn")))) is None
    cert, vchain = parse_result(v.handle_message(verification_message(cand.chain, "Dyn")))
    assert vchain == v.ctx.chain
    verify_chain(
        cand.chain.with_verification(cert, vchain), local_authlist=al, expected_service="Dyn",
        expected_verifier_service="V", authority_key=tb.ias.public_key, now=tb.clock.now(),
    )
    assert parse_result(v.handle_message(verification_message(cand.chain, "Nope"))) == "InsufficientApprovals"
    assert parse_result(v.handle_message(b"junk")) == "MalformedEncoding"


def test_approval_encoding_roundtrip(env):
    _, _, keys, _, cand = env
    a = StakeholderApproval.create(keys[0], cand.measurement, "Dyn")
    assert StakeholderApproval.decode(a.encode()) == a


def test_policy_threshold_bounds():
    with pytest.raises(ValueError):
        VerifierPolicy(frozenset({b"k"}), 2)
    with pytest.raises(ValueError):
        VerifierPolicy(frozenset({b"k"}), 0)
