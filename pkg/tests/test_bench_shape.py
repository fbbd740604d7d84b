"""Relative shape of the benchmark results: orderings, amortization and curve knees.

Runs the default workload with a shorter measurement window and one repeat;
the default 60 s warmup is kept so the initial attestation burst has drained.
"""

import pytest

from decent.bench import ChannelMode, WorkloadConfig, knee, run_latency_curve, run_point, run_sweep

WL = WorkloadConfig(measure_s=20, repeats=1)
TARGETS = [50, 100, 150, 200, 300, 400]
MODES = list(ChannelMode)


@pytest.fixture(scope="module")
def sweep():
    return {m: {r.requests_per_session: r for r in run_sweep(WL, m)} for m in MODES}


@pytest.fixture(scope="module")
def curves():
    return {
        (m, k): run_latency_curve(WL, m, TARGETS, k)
        for m in (ChannelMode.DECENT_RA, ChannelMode.RA_ONLY)
        for k in (50, 600)
    }


def test_plain_channel_is_an_upper_bound(sweep):
    plain = sweep[ChannelMode.PLAIN]
    for k, row in plain.items():
        assert row.throughput >= sweep[ChannelMode.DECENT_RA][k].throughput
        assert row.throughput >= sweep[ChannelMode.RA_ONLY][k].throughput


@pytest.mark.parametrize("mode", MODES, ids=lambda m: m.value)
def test_throughput_grows_with_session_length(sweep, mode):
    # 1% slack: once amortized the curve is flat up to sampling noise
    tp = [sweep[mode][k].throughput for k in sorted(sweep[mode])]
    assert all(b >= 0.99 * a for a, b in zip(tp, tp[1:])), tp


def test_only_ra_only_calls_the_attestation_service(sweep):
    assert all(r.ias_calls == 0 for r in sweep[ChannelMode.DECENT_RA].values())
    assert all(r.ias_calls == 0 for r in sweep[ChannelMode.PLAIN].values())
    assert all(r.ias_calls == r.handshakes > 0 for r in sweep[ChannelMode.RA_ONLY].values())


def test_ra_only_bends_first_at_short_sessions(curves):
    ra = knee(curves[ChannelMode.RA_ONLY, 50])
    decent = knee(curves[ChannelMode.DECENT_RA, 50])
    assert ra is not None
    assert decent is None or decent > ra


def test_long_sessions_make_the_modes_equivalent(curves):
    for d, r in zip(curves[ChannelMode.DECENT_RA, 600], curves[ChannelMode.RA_ONLY, 600]):
        assert abs(d.latency_mean_ms / r.latency_mean_ms - 1.0) <= 0.25


def test_single_node_run_completes():
    row = run_point(WL.with_(n_nodes=1, warmup_s=5, measure_s=5), ChannelMode.DECENT_RA, 50)
    assert row.n_nodes == 1 and row.throughput > 0
