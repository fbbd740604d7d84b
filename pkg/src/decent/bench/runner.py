"""Sweeps over the benchmark model, median aggregation and CSV output."""

from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import yaml

from .config import ChannelMode, CostModel, MetricsRow, WorkloadConfig
from .model import RunResult, run_once

SATURATION_FRACTION = 0.9


def _row(results: list[RunResult], target: float | None = None) -> MetricsRow:
    """Median over repeats, taken per column."""
    first = results[0]
    stats = [r.latency_stats_ms() for r in results]
    med = lambda xs: statistics.median(xs)  # noqa: E731
    row = MetricsRow(
        mode=first.mode.value,
        requests_per_session=first.requests_per_session,
        throughput=med([r.throughput for r in results]),
        latency_mean_ms=med([s[0] for s in stats]),
        latency_p50_ms=med([s[1] for s in stats]),
        latency_p95_ms=med([s[2] for s in stats]),
        handshakes=int(med([r.handshakes for r in results])),
        ias_calls=int(med([r.ias_calls for r in results])),
        n_nodes=first.n_nodes,
        target_throughput=target,
    )
    if target is not None:
        row.saturated = row.throughput < SATURATION_FRACTION * target
    return row


def run_point(
    config: WorkloadConfig,
    mode: ChannelMode,
    requests_per_session: int,
    costs: CostModel | None = None,
    target: float | None = None,
) -> MetricsRow:
    # repeat r uses seed+r in every mode, so modes are compared on common random numbers
    results = [
        run_once(config, mode, requests_per_session, costs, config.seed + r, target)
        for r in range(config.repeats)
    ]
    return _row(results, target)


def run_sweep(
    config: WorkloadConfig, mode: ChannelMode, costs: CostModel | None = None
) -> list[MetricsRow]:
    """Closed-loop throughput at every ``requests_per_session`` value of the config."""
    return [run_point(config, mode, k, costs) for k in config.requests_per_session]


def run_latency_curve(
    config: WorkloadConfig,
    mode: ChannelMode,
    target_throughputs: Iterable[float],
    requests_per_session: int = 50,
    costs: CostModel | None = None,
) -> list[MetricsRow]:
    """Paced load at increasing targets; rows below 90% of the target are flagged saturated."""
    return [run_point(config, mode, requests_per_session, costs, float(t)) for t in target_throughputs]


def run_node_scaling(
    config: WorkloadConfig,
    modes: Sequence[ChannelMode],
    node_counts: Iterable[int] = (3, 4, 5, 6),
    requests_per_session: int = 50,
    target: float | None = 100.0,
    costs: CostModel | None = None,
) -> list[MetricsRow]:
    rows = []
    for n in node_counts:
        cfg = config.with_(n_nodes=n)
        for mode in modes:
            rows.append(run_point(cfg, mode, requests_per_session, costs, target))
    return rows


def knee(rows: Sequence[MetricsRow], factor: float = 2.0) -> float | None:
    """First target at which mean latency exceeds ``factor`` times the lightest-load latency, or saturation."""
    rows = sorted(rows, key=lambda r: r.target_throughput or 0.0)
    if not rows:
        return None
    base = rows[0].latency_mean_ms
    for r in rows:
        if r.saturated or r.latency_mean_ms > factor * base:
            return r.target_throughput
    return None


def write_csv(rows: Iterable[MetricsRow], out: TextIO | str | Path) -> None:
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="") as fh:
            write_csv(rows, fh)
        return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(MetricsRow.HEADER)
    for r in rows:
        w.writerow(r.csv_values())


def rows_to_csv(rows: Iterable[MetricsRow]) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


@dataclass
class BenchConfig:
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    costs: CostModel = field(default_factory=CostModel)
    modes: tuple[ChannelMode, ...] = tuple(ChannelMode)
    latency_targets: tuple[float, ...] = ()
    latency_requests_per_session: int = 50
    node_counts: tuple[int, ...] = ()


def parse_bench_config(cfg: dict) -> BenchConfig:
    """Read the ``bench`` section of a scenario-format mapping.

    ``seed`` may sit at the top level like in scenarios; inside ``bench`` the
    keys are ``workload``, ``costs``, ``modes``, ``latency`` (``targets`` and
    ``requests_per_session``) and ``node_counts``.
    """
    if not isinstance(cfg, dict):
        raise ValueError("benchmark config must be a mapping")
    b = cfg.get("bench") or {}
    known = {"workload", "costs", "modes", "latency", "node_counts"}
    unknown = set(b) - known
    if unknown:
        raise ValueError(f"unknown bench keys: {', '.join(sorted(unknown))}")
    wl = dict(b.get("workload") or {})
    if "seed" in cfg and "seed" not in wl:
        wl["seed"] = int(cfg["seed"])
    out = BenchConfig(workload=WorkloadConfig.from_dict(wl), costs=CostModel.from_dict(b.get("costs") or {}))
    if "modes" in b:
        out.modes = tuple(ChannelMode.parse(str(m)) for m in b["modes"])
    lat = b.get("latency") or {}
    out.latency_targets = tuple(float(t) for t in lat.get("targets", ()))
    out.latency_requests_per_session = int(lat.get("requests_per_session", 50))
    out.node_counts = tuple(int(n) for n in b.get("node_counts", ()))
    return out


def load_bench_config(path: str | Path) -> BenchConfig:
    with open(path) as fh:
        return parse_bench_config(yaml.safe_load(fh) or {})
