import copy

import pytest

from decent.errors import NotLeakable
from decent.netsim import Established, Rejected, build_world, load, run_scenario
from decent.netsim.world import UNLEAKABLE

TWO_APPS = {
    "name": "canary",
    "seed": 3,
    "until": 5,
    "platforms": [{"id": "p1", "group": "g1"}, {"id": "p2", "group": "g1"}, {"id": "p3", "group": "g1"}],
    "hosts": [
        {"name": "h1", "platform": "p1"},
        {"name": "h2", "platform": "p2"},
        {"name": "hx", "platform": "p3", "honest": False},
    ],
    "authlists": {"app": [["DecentServer", "DecentServer"], ["AppA", "A"], ["AppB", "B"]]},
    "components": [
        {"name": "A", "host": "h1", "code": "AppA", "authlist": "app", "accept": {"peer_service": "B"}},
        {"name": "B", "host": "h2", "code": "AppB", "authlist": "app", "accept": {"peer_service": "A"}},
    ],
    "actions": [{"at": 1.0, "connect": {"from": "A", "to": "B", "service": "B", "send": ["secret:s1"]}}],
    "assert": {"secrecy": ["s1"], "authenticity": True, "received": [{"component": "B", "payload": "secret:s1"}]},
}


def scenario(**changes):
    cfg = copy.deepcopy(TWO_APPS)
    cfg.update(changes)
    return cfg


def test_honest_exchange_passes():
    res = run_scenario(scenario())
    assert res.passed, res.summary()
    assert res.log.of(Established)


def test_canary_authorised_adversary_component_learns_secret():
    # the adversary runs genuine AppB code on its own host: A is right to talk to it,
    # so the secret must show up in the adversary's knowledge (the checker is not vacuous)
    cfg = scenario(
        adversary={"components": [{"name": "E", "host": "hx", "code": "AppB", "authlist": "app",
                                   "accept": {"peer_service": "A"}}]},
        actions=[{"at": 1.0, "connect": {"from": "A", "to": "E", "service": "B", "send": ["secret:s1"]}}],
    )
    res = run_scenario(cfg)
    assert not res.world.assert_secrecy(res.world.secret("s1"))


def test_canary_leaked_key_then_clone_learns_secret():
    cfg = scenario(
        adversary={"leak": ["B"], "clones": [{"name": "B2", "host": "hx", "of": "B", "accept": {"peer_service": "A"}}]},
        actions=[{"at": 1.0, "connect": {"from": "A", "to": "B2", "service": "B", "send": ["secret:s1"]}}],
    )
    res = run_scenario(cfg)
    assert not res.world.assert_secrecy(res.world.secret("s1"))


def test_eavesdropper_only_sees_ciphertext():
    cfg = scenario(hosts=[
        {"name": "h1", "platform": "p1", "honest": False},
        {"name": "h2", "platform": "p2", "honest": False},
        {"name": "hx", "platform": "p3", "honest": False},
    ])
    res = run_scenario(cfg)
    assert res.passed, res.summary()
    assert res.world.frame_stats["malicious"] > 0
    assert all(res.world.secret("s1") not in fe.data for fe in res.world.wire)


def test_frame_accounting():
    res = run_scenario(scenario())
    w = res.world
    assert w.frame_stats["total"] == len(w.wire)
    assert w.frame_stats["malicious"] == 0


@pytest.mark.parametrize("kind", sorted(UNLEAKABLE))
def test_hardware_secrets_cannot_be_leaked(kind):
    w = build_world(scenario())
    with pytest.raises(NotLeakable):
        w.leak_secret(kind)


def test_same_seed_same_log_different_seed_differs():
    a = run_scenario(scenario(), seed=7).log.to_bytes()
    b = run_scenario(scenario(), seed=7).log.to_bytes()
    c = run_scenario(scenario(), seed=8).log.to_bytes()
    assert a == b and a != c


def test_adversary_components_need_malicious_host():
    cfg = scenario(adversary={"components": [{"name": "E", "host": "h1", "code": "Evil", "authlist": "app"}]})
    with pytest.raises(ValueError):
        build_world(cfg)


def test_dropping_handshake_frames_prevents_channel():
    cfg = scenario(
        hosts=[{"name": "h1", "platform": "p1"}, {"name": "h2", "platform": "p2", "honest": False},
               {"name": "hx", "platform": "p3", "honest": False}],
        adversary={"rules": [{"action": "drop", "frame": "M2"}]},
        **{"assert": {"secrecy": ["s1"], "authenticity": True}},
    )
    res = run_scenario(cfg)
    assert res.passed
    assert not [e for e in res.log.of(Established) if e.component == "A"]


def test_fuzzing_never_breaks_secrecy_or_authenticity():
    for seed in range(10):
        cfg = scenario(
            hosts=[{"name": "h1", "platform": "p1"}, {"name": "h2", "platform": "p2", "honest": False},
                   {"name": "hx", "platform": "p3", "honest": False}],
            adversary={"fuzz": 0.5},
            **{"assert": {"secrecy": ["s1"], "authenticity": True}},
        )
        res = run_scenario(cfg, seed=seed)
        assert res.passed, res.summary()


def test_rejections_are_logged_with_reason():
    cfg = scenario(actions=[{"at": 1.0, "connect": {"from": "A", "to": "B", "service": "A"}}])
    res = run_scenario(cfg)
    assert any(e.component == "A" and e.reason == "ServiceNotAuthorized" for e in res.log.of(Rejected))


def test_load_rejects_non_mapping():
    with pytest.raises(ValueError):
        load("- just a list\n")
