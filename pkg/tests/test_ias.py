import random
import statistics

import pytest

from decent.errors import UnknownGroup
from decent.ias import AttestationService, GammaDelay, LatencyModel, Verdict
from decent.platform import AttestationGroup, Platform, SimClock, enclave_code, pack_report_data


@pytest.fixture
def world():
    clock = SimClock(10.0)
    ias = AttestationService(random.Random(1), clock)
    group = AttestationGroup("g0", random.Random(2))
    p = Platform("p0", group, clock, random.Random(3))
    ias.provision(p)
    return ias, p


def _report(ias, p, data=b"k"):
    q = p.load_enclave(enclave_code("S")).create_quote(pack_report_data(data))
    return ias.verify_quote(q, b"n" * 16)


def test_ok_report_is_signed_and_echoes_quote(world):
    ias, p = world
    rep = _report(ias, p)
    assert rep.verdict is Verdict.OK
    assert rep.verify(ias.public_key)
    assert rep.measurement == enclave_code("S").measurement
    assert rep.report_data[:1] == b"k"
    assert rep.nonce == b"n" * 16


def test_report_roundtrip_and_tamper(world):
    ias, p = world
    rep = _report(ias, p)
    again = type(rep).decode(rep.encode())
    assert again == rep
    import dataclasses

    assert not dataclasses.replace(rep, verdict=Verdict.GroupRevoked).verify(ias.public_key)


def test_revoked_platform_gets_group_revoked(world):
    ias, p = world
    ias.revoke_platform("p0")
    assert _report(ias, p).verdict is Verdict.GroupRevoked
    sigrl = ias.get_sigrl("g0")
    assert "p0" in sigrl.revoked_platform_ids and sigrl.verify(ias.public_key)


def test_unknown_group_quote_is_signature_invalid(world):
    ias, _ = world
    stranger = Platform("px", AttestationGroup("gx", random.Random(5)), SimClock(), random.Random(6))
    assert _report(ias, stranger).verdict is Verdict.SignatureInvalid
    with pytest.raises(UnknownGroup):
        ias.get_sigrl("gx")


def test_forged_group_signature_rejected(world):
    ias, p = world
    import dataclasses

    q = p.load_enclave(enclave_code("S")).create_quote(pack_report_data(b"k"))
    forged = dataclasses.replace(q, measurement=enclave_code("T").measurement)
    assert ias.verify_quote(forged, b"n" * 16).verdict is Verdict.SignatureInvalid


def test_quote_pseudonym_unlinkable_without_escrow(world):
    _, p = world
    e = p.load_enclave(enclave_code("S"))
    a, b = e.create_quote(pack_report_data(b"k")), e.create_quote(pack_report_data(b"k"))
    assert a.pseudonym != b.pseudonym
    assert b"p0" not in a.encode()


def test_calls_counter(world):
    ias, p = world
    _report(ias, p)
    ias.get_sigrl("g0")
    assert ias.calls["verify_quote"] == 1 and ias.calls["get_sigrl"] == 1


def test_gamma_moments():
    g = GammaDelay(0.255, 0.070)
    assert g.shape * g.scale == pytest.approx(0.255)
    assert (g.shape * g.scale**2) ** 0.5 == pytest.approx(0.070)


@pytest.mark.parametrize("which", ["report", "sigrl"])
def test_sampled_delays_match_parameters(which):
    ias = AttestationService(random.Random(0), latency_seed=11)
    sample = ias.sample_report_delay if which == "report" else ias.sample_sigrl_delay
    target = getattr(LatencyModel(), which)
    xs = [sample() for _ in range(20_000)]
    assert statistics.fmean(xs) == pytest.approx(target.mean, rel=0.05)
    assert statistics.pstdev(xs) == pytest.approx(target.sd, rel=0.05)
    assert min(xs) > 0


def test_replay_mode_returns_first_report(world):
    _, p = world
    ias = AttestationService(random.Random(1), p.clock, replay_mode=True)
    ias.provision(p)
    first = _report(ias, p, b"a")
    assert _report(ias, p, b"b") == first
