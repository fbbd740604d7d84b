"""Benchmark configuration, channel modes, cost model and result rows."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field, fields, replace

from ..ias import GammaDelay, LatencyModel


class ChannelMode(enum.Enum):
    DECENT_RA = "DecentRA"
    RA_ONLY = "RaOnly"
    PLAIN = "PlainChannel"

    @classmethod
    def parse(cls, name: str) -> "ChannelMode":
        for m in cls:
            if name.lower() in (m.value.lower(), m.name.lower()):
                return m
        raise ValueError(f"unknown mode {name!r} (choose from {', '.join(m.value for m in cls)})")


DEFAULT_SWEEP = (10, 50, 100, 200, 400, 800, 1600)


@dataclass(frozen=True)
class WorkloadConfig:
    read_fraction: float = 0.95
    records_per_node: int = 3000
    n_nodes: int = 6
    warmup_s: float = 60.0
    measure_s: float = 60.0
    repeats: int = 3
    requests_per_session: tuple[int, ...] = DEFAULT_SWEEP
    client_threads: int = 50
    request_threads: int = 18
    forward_threads: int = 6
    peer_threads: int = 2
    quote_threads: int = 14
    plain_sealing: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.read_fraction <= 1.0:
            raise ValueError("read_fraction must be in [0, 1]")
        if self.n_nodes < 1 or self.client_threads < 1 or self.repeats < 1:
            raise ValueError("n_nodes, client_threads and repeats must be positive")
        if any(k < 1 for k in self.requests_per_session):
            raise ValueError("requests_per_session entries must be positive")
        for name in ("request_threads", "forward_threads", "peer_threads", "quote_threads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    def with_(self, **kw) -> "WorkloadConfig":
        return replace(self, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "WorkloadConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown workload keys: {', '.join(sorted(unknown))}")
        d = dict(d)
        if "requests_per_session" in d:
            d["requests_per_session"] = tuple(int(k) for k in d["requests_per_session"])
        return cls(**d)


@dataclass(frozen=True)
class CostModel:
    """Service demands in seconds.

    Node costs are charged to that node's single core; client costs are pure
    delays (the client machine is not modelled as a shared resource).
    ``client_think`` is per-operation client overhead outside the measured
    latency. IAS and AESM are FIFO servers shared by all nodes.
    """

    net: float = 0.0001
    client_think: float = 0.018
    client_op: float = 0.0003
    # enclave-side per-message work (AEAD + transition) for client and peer messages
    node_request: float = 0.00025
    node_peer: float = 0.0002
    node_store: float = 0.00015
    # plain (non-enclave) equivalents
    plain_request: float = 0.00015
    plain_peer: float = 0.00012
    plain_store: float = 0.00012
    # session setup
    decent_handshake_node: float = 0.015
    decent_handshake_client: float = 0.015
    plain_handshake_node: float = 0.003
    plain_handshake_client: float = 0.003
    ra_node: float = 0.004
    ra_client: float = 0.004
    aesm_quote: float = 0.010
    # per-request session resumption
    tls_resume_node: float = 0.0004
    plain_resume_node: float = 0.0001
    ra_resume_node: float = 0.0001
    cpu_quantum: float = 0.0005
    ias: LatencyModel = field(default_factory=LatencyModel)
    ias_servers: int = 1

    def with_(self, **kw) -> "CostModel":
        return replace(self, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "CostModel":
        d = dict(d)
        ias = d.pop("ias", None)
        if ias is not None:
            d["ias"] = LatencyModel(
                report=GammaDelay(*ias.get("report", (0.255, 0.070))),
                sigrl=GammaDelay(*ias.get("sigrl", (0.039, 0.024))),
            )
        return cls(**d)


@dataclass
class MetricsRow:
    mode: str
    requests_per_session: int
    throughput: float
    latency_mean_ms: float
    latency_p50_ms: float
    latency_p95_ms: float
    handshakes: int
    ias_calls: int
    n_nodes: int = 6
    target_throughput: float | None = None
    saturated: bool = False

    HEADER = (
        "mode",
        "requests_per_session",
        "n_nodes",
        "target_throughput",
        "throughput",
        "latency_mean_ms",
        "latency_p50_ms",
        "latency_p95_ms",
        "handshakes",
        "ias_calls",
        "saturated",
    )

    def as_dict(self) -> dict:
        return asdict(self)

    def csv_values(self) -> list[str]:
        d = self.as_dict()
        out = []
        for k in self.HEADER:
            v = d[k]
            if isinstance(v, float):
                out.append(f"{v:.3f}")
            elif v is None:
                out.append("")
            else:
                out.append(str(v))
        return out
