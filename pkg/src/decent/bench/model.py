"""Virtual-time model of the DecentHT benchmark.

Clients are closed-loop threads (optionally paced to a target throughput).
Each session picks one entry node and opens a channel with it: a certificate
handshake (DecentRA), a remote attestation through the IAS simulator
(RaOnly) or a plain TLS handshake. Every request in a session is one
resumption plus a lookup followed by a read or write, all through the entry
node. Lookup hops follow the finger tables of a real DecentHT ring built with
evenly spaced ids.
"""

from __future__ import annotations

import bisect
import functools
import math
import random
import statistics
from dataclasses import dataclass, field

from .. import dht
from .config import ChannelMode, CostModel, WorkloadConfig
from .engine import FifoServer, Pool, Sim, TimeSlicedCpu


@dataclass(frozen=True)
class Routes:
    """``hops[entry][owner]``: nodes the entry queries remotely while looking up a key owned by ``owner``."""

    ids: tuple[int, ...]
    hops: tuple[tuple[tuple[int, ...], ...], ...]
    owners: tuple[int, ...]  # owner index per record


@functools.lru_cache(maxsize=16)
def build_routes(n_nodes: int, records_per_node: int, seed: int = 0) -> Routes:
    from ..testbed import Testbed

    tb = Testbed(seed)
    al = tb.authlist(("DecentHT", dht.SERVICE))
    ring = dht.Ring()
    for i, nid in enumerate(dht.evenly_spaced_ids(n_nodes)):
        ring.add(tb.component("DecentHT", al, f"node{i}"), id_override=nid)
    ring.quiesce()
    index = {m.address: i for i, m in enumerate(ring.members)}
    ids = tuple(m.id for m in ring.members)
    hops = []
    for entry in ring.members:
        row = []
        for owner in ring.members:
            row.append(tuple(index[a] for a in _remote_path(ring, entry, owner.id)))
        hops.append(tuple(row))
    sorted_ids = sorted(ids)
    by_id = {nid: i for i, nid in enumerate(ids)}
    owners = tuple(
        by_id[sorted_ids[bisect.bisect_left(sorted_ids, dht.hash64(b"user%d" % r)) % n_nodes]]
        for r in range(n_nodes * records_per_node)
    )
    return Routes(ids, tuple(hops), owners)


def _remote_path(ring: dht.Ring, entry: dht.DhtNode, key_id: int) -> list[str]:
    """Addresses an iterative lookup from ``entry`` contacts (the entry answers itself locally)."""
    nodes = {m.address: m for m in ring.members}
    cur, path = entry, []
    for _ in range(dht.MAX_HOPS):
        if dht.in_half_open(key_id, cur.id, cur.successor.id):
            return path
        nxt = cur.closest_preceding(key_id)
        if nxt == cur.ref:
            nxt = cur.successor
        cur = nodes[nxt.address]
        path.append(cur.address)
    raise RuntimeError("routing loop")


@dataclass
class _Client:
    idx: int
    rng: random.Random
    entry: int = 0
    left: int = 0
    owner: int = 0
    t_issue: float = 0.0
    t0: float = 0.0
    issued: int = 0
    sessions: int = 0
    first: int = 0


@dataclass
class RunResult:
    mode: ChannelMode
    requests_per_session: int
    n_nodes: int
    measure_s: float
    completed: int = 0
    latencies: list[float] = field(default_factory=list)
    handshakes: int = 0
    ias_calls: int = 0
    target: float | None = None
    client_issued: list[int] = field(default_factory=list)
    client_sessions: list[int] = field(default_factory=list)
    node_utilization: list[float] = field(default_factory=list)
    ias_utilization: float = 0.0

    @property
    def throughput(self) -> float:
        return self.completed / self.measure_s

    def latency_stats_ms(self) -> tuple[float, float, float]:
        if not self.latencies:
            return (math.nan, math.nan, math.nan)
        s = sorted(self.latencies)
        p = lambda q: s[min(len(s) - 1, int(q * len(s)))]  # noqa: E731
        return (1000 * statistics.fmean(s), 1000 * p(0.5), 1000 * p(0.95))


class Model:
    def __init__(
        self,
        cfg: WorkloadConfig,
        mode: ChannelMode,
        requests_per_session: int,
        costs: CostModel | None = None,
        seed: int = 0,
        target: float | None = None,
    ):
        self.cfg = cfg
        self.mode = mode
        self.k = requests_per_session
        self.costs = c = costs or CostModel()
        self.routes = build_routes(cfg.n_nodes, cfg.records_per_node)
        self.sim = sim = Sim()
        n = cfg.n_nodes
        self.cpu = [TimeSlicedCpu(sim, c.cpu_quantum) for _ in range(n)]
        self.req_threads = [Pool(cfg.request_threads) for _ in range(n)]
        self.fwd_threads = [Pool(cfg.forward_threads) for _ in range(n)]
        self.peer_threads = [Pool(cfg.peer_threads) for _ in range(n)]
        self.quote_threads = [Pool(cfg.quote_threads) for _ in range(n)]
        self.aesm = FifoServer(sim)
        self.ias = FifoServer(sim, c.ias_servers)
        self.ias_rng = random.Random(f"ias-{seed}")
        self.t_start = cfg.warmup_s
        self.t_end = cfg.warmup_s + cfg.measure_s
        self.result = RunResult(mode, self.k, n, cfg.measure_s, target=target)
        self.interval = cfg.client_threads / target if target else None
        if mode is ChannelMode.PLAIN:
            self.c_req, self.c_peer = c.plain_request, c.plain_peer
            self.c_store = c.plain_store if cfg.plain_sealing else 0.0
        else:
            self.c_req, self.c_peer, self.c_store = c.node_request, c.node_peer, c.node_store
        self.resume_node = {
            ChannelMode.DECENT_RA: c.tls_resume_node,
            ChannelMode.RA_ONLY: c.ra_resume_node,
            ChannelMode.PLAIN: c.plain_resume_node,
        }[mode]
        # TLS resumption costs one extra round trip; the RA ticket rides on the first request
        self.resume_rtt = 0.0 if mode is ChannelMode.RA_ONLY else 2 * c.net
        self.clients = [
            _Client(i, random.Random(f"client-{seed}-{i}")) for i in range(cfg.client_threads)
        ]

    def _in_window(self) -> bool:
        return self.t_start <= self.sim.now < self.t_end

    # -- client loop ------------------------------------------------------------

    def run(self) -> RunResult:
        for cl in self.clients:
            cl.t0 = cl.rng.random() * (self.interval or self.costs.client_think)
            # a random first session length spreads session renewals over time
            cl.first = 1 + int(cl.rng.random() * self.k)
            self.sim.at(cl.t0, self._issue, cl)
        self.sim.run(self.t_end)
        r = self.result
        r.client_issued = [cl.issued for cl in self.clients]
        r.client_sessions = [cl.sessions for cl in self.clients]
        r.node_utilization = [s.busy_time / self.t_end for s in self.cpu]
        r.ias_utilization = self.ias.busy_time / self.t_end
        return r

    def _next(self, cl: _Client) -> None:
        if self.interval is not None:
            due = cl.t0 + cl.issued * self.interval
            if due > self.sim.now:
                self.sim.at(due, self._issue, cl)
                return
        self._issue(cl)

    def _issue(self, cl: _Client) -> None:
        rng = cl.rng
        cl.t_issue = self.sim.now
        cl.issued += 1
        owners = self.routes.owners
        cl.owner = owners[rng.randrange(len(owners))]
        rng.random()  # read or write: both cost one seal operation at the owner
        # drawn on every request so that runs with different session lengths share random streams
        entry = rng.randrange(self.cfg.n_nodes)
        if cl.left == 0:
            cl.entry = entry
            cl.left = cl.first if cl.sessions == 0 else self.k
            cl.sessions += 1
            # counted per session opened in the window; RaOnly sends one quote verification per session
            if self._in_window():
                self.result.handshakes += 1
                if self.mode is ChannelMode.RA_ONLY:
                    self.result.ias_calls += 1
            self._handshake(cl)
        else:
            self._request(cl)
        cl.left -= 1

    def _complete(self, cl: _Client) -> None:
        if self._in_window():
            self.result.completed += 1
            self.result.latencies.append(self.sim.now - cl.t_issue)
        self.sim.after(self.costs.client_think, self._next, cl)

    # -- session setup ---------------------------------------------------------

    def _handshake(self, cl: _Client) -> None:
        if self.mode is ChannelMode.RA_ONLY:
            self._ra_sigrl(cl)
        else:
            self.sim.after(self.costs.net, self.req_threads[cl.entry].acquire, self._hs_node, cl)

    def _hs_node(self, cl: _Client) -> None:
        c = self.costs
        cost = c.decent_handshake_node if self.mode is ChannelMode.DECENT_RA else c.plain_handshake_node
        self.cpu[cl.entry].serve(cost, self._hs_reply, cl)

    def _hs_reply(self, cl: _Client) -> None:
        c = self.costs
        self.req_threads[cl.entry].release()
        client = c.decent_handshake_client if self.mode is ChannelMode.DECENT_RA else c.plain_handshake_client
        # the client's Finished message travels with the first request
        self.sim.after(c.net + client, self._first_request, cl)

    def _ra_sigrl(self, cl: _Client) -> None:
        self.ias.serve(self.costs.ias.sigrl.sample(self.ias_rng), self._ra_msg2, cl)

    def _ra_msg2(self, cl: _Client) -> None:
        self.sim.after(self.costs.net, self.quote_threads[cl.entry].acquire, self._ra_quote, cl)

    def _ra_quote(self, cl: _Client) -> None:
        self.cpu[cl.entry].serve(self.costs.ra_node, self._ra_aesm, cl)

    def _ra_aesm(self, cl: _Client) -> None:
        self.aesm.serve(self.costs.aesm_quote, self._ra_msg3, cl)

    def _ra_msg3(self, cl: _Client) -> None:
        self.quote_threads[cl.entry].release()
        self.sim.after(self.costs.net, self._ra_report, cl)

    def _ra_report(self, cl: _Client) -> None:
        self.ias.serve(self.costs.ias.report.sample(self.ias_rng), self._ra_verified, cl)

    def _ra_verified(self, cl: _Client) -> None:
        self.sim.after(self.costs.ra_client, self._first_request, cl)

    def _first_request(self, cl: _Client) -> None:
        # a fresh session needs no resumption
        self.sim.after(self.costs.client_op + self.costs.net, self.req_threads[cl.entry].acquire, self._lookup, cl, 0.0)

    # -- one request -------------------------------------------------------------

    def _request(self, cl: _Client) -> None:
        c = self.costs
        self.sim.after(
            c.client_op + self.resume_rtt + c.net,
            self.req_threads[cl.entry].acquire,
            self._lookup,
            cl,
            self.resume_node,
        )

    def _lookup(self, cl: _Client, resume: float) -> None:
        self.cpu[cl.entry].serve(self.c_req + resume, self._hop, cl, 0)

    def _hop(self, cl: _Client, i: int) -> None:
        path = self.routes.hops[cl.entry][cl.owner]
        if i < len(path):
            self.fwd_threads[cl.entry].acquire(self.sim.after, self.costs.net, self._peer_in, cl, path[i], i)
        else:
            self.req_threads[cl.entry].release()
            # lookup answer to the client, which immediately sends the data request
            self.sim.after(2 * self.costs.net, self.req_threads[cl.entry].acquire, self._data, cl)

    def _peer_in(self, cl: _Client, node: int, i: int) -> None:
        self.peer_threads[node].acquire(self._peer_cpu, cl, node, i)

    def _peer_cpu(self, cl: _Client, node: int, i: int) -> None:
        self.cpu[node].serve(self.c_peer, self._peer_out, cl, node, i)

    def _peer_out(self, cl: _Client, node: int, i: int) -> None:
        self.peer_threads[node].release()
        self.sim.after(self.costs.net, self._peer_back, cl, i)

    def _peer_back(self, cl: _Client, i: int) -> None:
        self.fwd_threads[cl.entry].release()
        self._hop(cl, i + 1)

    def _data(self, cl: _Client) -> None:
        if cl.owner == cl.entry:
            self.cpu[cl.entry].serve(self.c_req + self.c_store, self._data_done, cl)
        else:
            self.cpu[cl.entry].serve(self.c_req, self._data_fwd, cl)

    def _data_fwd(self, cl: _Client) -> None:
        self.fwd_threads[cl.entry].acquire(self.sim.after, self.costs.net, self._owner_in, cl)

    def _owner_in(self, cl: _Client) -> None:
        self.peer_threads[cl.owner].acquire(self._owner_cpu, cl)

    def _owner_cpu(self, cl: _Client) -> None:
        self.cpu[cl.owner].serve(self.c_peer + self.c_store, self._owner_out, cl)

    def _owner_out(self, cl: _Client) -> None:
        self.peer_threads[cl.owner].release()
        self.sim.after(self.costs.net, self._owner_back, cl)

    def _owner_back(self, cl: _Client) -> None:
        self.fwd_threads[cl.entry].release()
        self._data_done(cl)

    def _data_done(self, cl: _Client) -> None:
        self.req_threads[cl.entry].release()
        self.sim.after(self.costs.net + self.costs.client_op, self._complete, cl)


def run_once(
    cfg: WorkloadConfig,
    mode: ChannelMode,
    requests_per_session: int,
    costs: CostModel | None = None,
    seed: int = 0,
    target: float | None = None,
) -> RunResult:
    return Model(cfg, mode, requests_per_session, costs, seed, target).run()
