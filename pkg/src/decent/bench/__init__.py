"""DecentHT benchmark: channel modes compared on a virtual-time queueing model."""

from .config import DEFAULT_SWEEP, ChannelMode, CostModel, MetricsRow, WorkloadConfig
from .model import RunResult, build_routes, run_once
from .runner import (
    BenchConfig,
    knee,
    load_bench_config,
    parse_bench_config,
    rows_to_csv,
    run_latency_curve,
    run_node_scaling,
    run_point,
    run_sweep,
    write_csv,
)

__all__ = [
    "DEFAULT_SWEEP",
    "BenchConfig",
    "ChannelMode",
    "CostModel",
    "MetricsRow",
    "RunResult",
    "WorkloadConfig",
    "build_routes",
    "knee",
    "load_bench_config",
    "parse_bench_config",
    "rows_to_csv",
    "run_latency_curve",
    "run_node_scaling",
    "run_once",
    "run_point",
    "run_sweep",
    "write_csv",
]
