import pytest

from decent.channel import connect_pair
from decent.component import RevokerConfig, SealedBlob, State, poll_revocations
from decent.corl import CoRL
from decent.errors import AuthFailure, ComponentShutDown, MalformedEncoding, TransportError
from decent.revoker import Revoker, local_endpoint
from decent.testbed import Testbed
from decent.verifier import VerifierPolicy


@pytest.fixture
def env():
    tb = Testbed(seed=21)
    al = tb.authlist(("AppA", "A"), ("AppB", "B"), ("DecentRevoker", "DecentRevoker"))
    return tb, al


def test_seal_roundtrip_and_encoding(env):
    tb, al = env
    a = tb.component("AppA", al, "p0")
    blob = a.seal(b"state", b"secret")
    assert a.unseal(SealedBlob.decode(blob.encode())) == b"secret"


def test_seal_survives_restart_with_same_identity(env):
    tb, al = env
    blob = tb.component("AppA", al, "p0").seal(b"l", b"x")
    assert tb.component("AppA", al, "p0").unseal(blob) == b"x"


def test_seal_bound_to_authlist(env):
    tb, al = env
    blob = tb.component("AppA", al, "p0").seal(b"l", b"x")
    other = tb.authlist(("AppA", "A"))
    with pytest.raises(AuthFailure):
        tb.component("AppA", other, "p0").unseal(blob)


def test_seal_bound_to_label(env):
    tb, al = env
    a = tb.component("AppA", al, "p0")
    blob = a.seal(b"l1", b"x")
    import dataclasses

    with pytest.raises(AuthFailure):
        a.unseal(dataclasses.replace(blob, label=b"l2"))


def test_sealed_blob_decode_strict():
    with pytest.raises(MalformedEncoding):
        SealedBlob.decode(b"\x01\x00\x00\x00\x01x")


def test_shutdown_refuses_everything(env):
    tb, al = env
    a, b = tb.component("AppA", al, "p0"), tb.component("AppB", al, "p1")
    c, s = connect_pair(a, b, a.connect_config("B"), b.accept_config("A"))
    c.session_ticket = None
    a.track(c)
    blob = a.seal(b"l", b"x")
    a.shut_down()
    assert a.state is State.SHUT_DOWN
    for op in (
        lambda: a.seal(b"l", b"y"),
        lambda: a.unseal(blob),
        lambda: a.seal_ikm(),
        lambda: a.connect_config("B") and a.initiator(a.connect_config("B")),
        lambda: b.accept_config("A") and a.responder(b.accept_config("A")),
        lambda: a.apply_corl(None, b""),
    ):
        with pytest.raises(ComponentShutDown):
            op()
    with pytest.raises((TransportError, ComponentShutDown)):
        c.encrypt(b"late")


def test_shutdown_callbacks_run_once(env):
    tb, al = env
    a = tb.component("AppA", al, "p0")
    seen = []
    a.on_shutdown.append(seen.append)
    a.shut_down()
    a.shut_down()
    assert seen == [a]


def _revoker(tb, al):
    rv_ctx = tb.component("DecentRevoker", al, "p2")
    return Revoker(rv_ctx, VerifierPolicy(frozenset({rv_ctx.keypair.public}), 1))


def test_successful_polls_keep_component_alive(env):
    tb, al = env
    rv = _revoker(tb, al)
    a = tb.component("AppA", al, "p0", revoker_config=RevokerConfig(poll_interval=5, max_missed=3))
    for _ in range(10):
        tb.clock.advance(5)
        poll_revocations(a, {"DecentRevoker": local_endpoint(rv)})
        assert a.state is State.RUNNING


def test_suppressed_polls_shut_down_within_bound(env):
    tb, al = env
    cfg = RevokerConfig(poll_interval=5, max_missed=3)
    a = tb.component("AppA", al, "p0", revoker_config=cfg)
    start = tb.clock.now()
    while a.state is State.RUNNING:
        tb.clock.advance(cfg.poll_interval)
        poll_revocations(a, {})
    assert tb.clock.now() - start <= cfg.max_missed * cfg.poll_interval


def test_silent_deadline_without_polls(env):
    tb, al = env
    a = tb.component("AppA", al, "p0", revoker_config=RevokerConfig(poll_interval=5, max_missed=3))
    a.check_liveness()
    tb.clock.advance(14.9)
    assert a.check_liveness()
    tb.clock.advance(0.1)
    assert not a.check_liveness()
    assert a.state is State.SHUT_DOWN


def test_corl_rollback_and_foreign_signature_rejected(env):
    tb, al = env
    rv = tb.component("DecentRevoker", al, "p2")
    a = tb.component("AppA", al, "p0")
    m = rv.measurement
    assert a.apply_corl(CoRL.signed(rv.keypair, m, 2, [b"x" * 32, b"y" * 32]), rv.keypair.public)
    assert not a.apply_corl(CoRL.signed(rv.keypair, m, 1, [b"x" * 32]), rv.keypair.public)
    assert not a.apply_corl(CoRL.signed(rv.keypair, m, 3, [b"z" * 32]), rv.keypair.public)
    assert not a.apply_corl(CoRL.signed(a.keypair, m, 4, [b"x" * 32, b"y" * 32, b"q" * 32]), rv.keypair.public)
    assert a.corl_digests() == {b"x" * 32, b"y" * 32}


def test_refresh_chain_keeps_key(env):
    tb, al = env
    a = tb.component("AppA", al, "p0")
    tb.clock.advance(10)
    old = a.chain
    new = a.refresh_chain(tb.servers["p0"])
    assert new.public_key == old.public_key and new.component.issued_at > old.component.issued_at
