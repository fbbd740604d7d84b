"""Deterministic discrete-event world: platforms, hosts, components and an adversary.

Every frame between two components travels over a connection. When either
end sits on a malicious host the frame is handed to the :class:`Adversary`,
which records it in its :class:`KnowledgeSet` and decides what is delivered.
Enclaves themselves are never under adversary control: the adversary only
owns the keys of components it runs itself (or that were explicitly leaked).
"""

from __future__ import annotations

import heapq
import itertools
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .. import crypto
from ..authlist import DECENT_REVOKER, AuthList
from ..certs import CertChain, ComponentCertificate
from ..channel import (
    FrameType,
    HandshakeConfig,
    Initiator,
    Responder,
    ResumeInitiator,
    ResumeResponder,
    SessionTicket,
    alert_frame,
    parse_frame,
)
from ..component import ComponentContext, RevokerConfig, State, component_init
from ..corl import parse_poll_reply, poll_request
from ..errors import ChainRejected, DecentError, MalformedEncoding, NotLeakable, PeerRejected, RejectReason
from ..ias import AttestationService
from ..platform import AttestationGroup, EnclaveCode, Host, Platform, SimClock, enclave_code
from ..revoker import RevocationRequest, Revoker
from ..server import DecentServer
from ..verifier import StakeholderApproval, Verifier, VerifierPolicy, parse_result, verification_message
from .events import Accepted, Established, EventLog, Note, Rejected, Revoked, Sent, ShutDown, check_authenticity
from .knowledge import KnowledgeSet

UNLEAKABLE = frozenset({"ias", "cpu", "report", "group", "seal", "root_seal"})


@dataclass
class FrameEvent:
    time: float
    conn_id: int
    purpose: str
    direction: str  # c2s or s2c
    src: str
    dst: str
    data: bytes

    @property
    def frame_type(self) -> str:
        if self.purpose == "la":
            return "LA"
        try:
            return parse_frame(self.data)[0].name
        except MalformedEncoding:
            return "GARBAGE"


# a rule returns None when it does not apply, otherwise the list of
# (bytes, extra delay) to deliver in place of the original frame
Rule = Callable[[FrameEvent, "Adversary"], "list[tuple[bytes, float]] | None"]


def match_rule(
    action: str,
    *,
    frame: str | None = None,
    direction: str | None = None,
    purpose: str | None = None,
    src: str | None = None,
    dst: str | None = None,
    after: float | None = None,
    before: float | None = None,
    offset: int = -1,
    delay: float = 0.0,
    limit: int | None = None,
) -> Rule:
    """Build a declarative rule: deliver, drop, modify, duplicate, replay or delay."""
    if action not in {"deliver", "drop", "modify", "duplicate", "replay", "delay"}:
        raise ValueError(f"unknown adversary action {action!r}")
    state = {"used": 0}

    def rule(fe: FrameEvent, adv: "Adversary"):
        if frame is not None and fe.frame_type != frame:
            return None
        if direction is not None and fe.direction != direction:
            return None
        if purpose is not None and fe.purpose != purpose:
            return None
        if src is not None and fe.src != src:
            return None
        if dst is not None and fe.dst != dst:
            return None
        if after is not None and fe.time < after:
            return None
        if before is not None and fe.time >= before:
            return None
        if limit is not None and state["used"] >= limit:
            return None
        state["used"] += 1
        if action == "deliver":
            return [(fe.data, 0.0)]
        if action == "drop":
            return []
        if action == "modify":
            return [(flip_byte(fe.data, offset), 0.0)]
        if action == "duplicate":
            return [(fe.data, 0.0), (fe.data, 0.0)]
        if action == "delay":
            return [(fe.data, delay)]
        # replay: deliver now, and again later
        return [(fe.data, 0.0), (fe.data, delay or 0.001)]

    return rule


def flip_byte(data: bytes, offset: int = -1) -> bytes:
    if not data:
        return data
    b = bytearray(data)
    b[offset % len(b)] ^= 0x01
    return bytes(b)


class Adversary:
    """Controls every malicious host's network I/O."""

    def __init__(self, world: "SimWorld", rng: random.Random):
        self.world = world
        self.rng = rng
        self.knowledge = KnowledgeSet()
        self.rules: list[Rule] = []
        self.fuzz_probability = 0.0
        self.intercepted: list[FrameEvent] = []
        self.leaked: set[str] = set()

    def add_rule(self, rule: Rule) -> None:
        self.rules.append(rule)

    def intercept(self, fe: FrameEvent) -> list[tuple[bytes, float]]:
        self.intercepted.append(fe)
        self.knowledge.observe_frame(fe.conn_id, fe.data, fe.purpose)
        for rule in self.rules:
            out = rule(fe, self)
            if out is not None:
                return out
        if self.fuzz_probability and self.rng.random() < self.fuzz_probability:
            choice = self.rng.randrange(3)
            if choice == 0:
                return []
            if choice == 1:
                return [(flip_byte(fe.data, self.rng.randrange(max(1, len(fe.data)))), 0.0)]
            return [(fe.data, 0.0), (fe.data, 0.0)]
        return [(fe.data, 0.0)]

    def inject(self, conn_id: int, direction: str, data: bytes, delay: float = 0.0) -> None:
        """Put arbitrary bytes on a connection that touches a malicious host."""
        conn = self.world.conns[conn_id]
        if not conn.malicious:
            raise PermissionError("adversary can only inject on links it controls")
        self.knowledge.add(data)
        self.world._schedule_delivery(conn, direction, data, delay)


@dataclass
class Node:
    name: str
    host: Host
    ctx: ComponentContext
    adversarial: bool = False
    accept: dict | None = None
    service: str | None = None
    poll_targets: list[str] = field(default_factory=list)
    revoker: Revoker | None = None
    verifier: Verifier | None = None
    tickets: dict[tuple[str, str], SessionTicket] = field(default_factory=dict)
    received: list[bytes] = field(default_factory=list)

    @property
    def malicious_host(self) -> bool:
        return not self.host.honest

    def accept_config(self) -> HandshakeConfig | None:
        a = self.accept
        if a is None:
            return None
        return self.ctx.accept_config(
            a.get("peer_service"),
            a.get("verifier_service"),
            open_service=bool(a.get("open")),
            verifier_of_verifier_service=a.get("verifier_of_verifier_service"),
        )


class Conn:
    def __init__(self, world: "SimWorld", cid: int, client: Node, server: Node, purpose: str):
        self.world = world
        self.id = cid
        self.client = client
        self.server = server
        self.purpose = purpose
        self.malicious = client.malicious_host or server.malicious_host
        self.closed = False
        self.client_ep: _ClientEndpoint | None = None
        self.server_ep: _ServerEndpoint | None = None


class _Endpoint:
    role = ""

    def __init__(self, world: "SimWorld", conn: Conn, node: Node):
        self.world = world
        self.conn = conn
        self.node = node
        self.channel = None
        self.dead = False

    @property
    def direction(self) -> str:
        return "c2s" if self.role == "client" else "s2c"

    def send(self, data: bytes) -> None:
        if not self.conn.closed:
            self.world._transmit(self.conn, self.direction, data)

    def fail(self, exc: DecentError) -> None:
        self.dead = True
        reason = exc.reason.name if isinstance(exc, ChainRejected) else type(exc).__name__
        if isinstance(exc, PeerRejected):
            reason = f"PeerRejected:{exc.reason}"
        self.world.log(Rejected(self.world.now, self.node.name, reason))
        if not isinstance(exc, PeerRejected):
            self.send(alert_frame(exc))
        self.conn.closed = True

    def established(self, channel) -> None:
        self.channel = channel
        self.node.ctx.track(channel)
        peer = channel.peer.measurement if channel.peer else b""
        self.world.log(Established(self.world.now, self.node.name, self.role, peer, channel.resumed, self.conn.purpose))

    def send_payload(self, payload: bytes) -> None:
        if self.conn.purpose == "app" and not self.node.adversarial:
            ctx = self.node.ctx
            self.world.log(Sent(self.world.now, self.node.name, ctx.measurement, ctx.authlist.hash, crypto.hash(payload)))
        self.send(self.channel.encrypt(payload))

    def accepted(self, payload: bytes) -> None:
        peer = self.channel.peer
        if self.conn.purpose == "app" and peer is not None and not self.node.adversarial:
            self.world.log(Accepted(self.world.now, self.node.name, peer.measurement, peer.authlist_hash, crypto.hash(payload)))
        self.node.received.append(payload)


class _ClientEndpoint(_Endpoint):
    role = "client"

    def __init__(self, world, conn, node, config: HandshakeConfig, payloads: list[bytes], resume: bool, target_service: str):
        super().__init__(world, conn, node)
        self.config = config
        self.payloads = list(payloads)
        self.resume = resume
        self.target_service = target_service
        self.awaiting = 0
        self.hs = None

    def start(self) -> None:
        try:
            ticket = self.node.tickets.get((self.conn.server.name, self.target_service)) if self.resume else None
            if ticket is not None:
                self.hs = ResumeInitiator(self.node.ctx, ticket, self.config)
                self.send(self.hs.start())
            else:
                self.hs = Initiator(self.node.ctx, self.config)
                m1 = self.hs.start()
                if self.node.adversarial:
                    self.world.adversary.knowledge.add_kex_private(self.hs._kex.private)
                self.send(m1)
        except DecentError as exc:
            self.fail(exc)

    def on_frame(self, data: bytes) -> None:
        try:
            if self.channel is None:
                if isinstance(self.hs, ResumeInitiator):
                    self.established(self.hs.on_r2(data))
                else:
                    m3 = self.hs.on_m2(data)
                    if m3 is not None:
                        self.send(m3)
                    self.established(self.hs.channel)
                self._flush()
                return
            pt = self.channel.decrypt(data)
            if pt is None:  # a session ticket
                ticket = self.channel.session_ticket
                self.node.tickets[(self.conn.server.name, self.target_service)] = ticket
                return
            self.accepted(pt)
            self.world._client_message(self, pt)
            self.awaiting -= 1
            if self.awaiting <= 0 and not self.payloads:
                self.conn.closed = True
        except DecentError as exc:
            self.fail(exc)

    def _flush(self) -> None:
        while self.payloads:
            self.awaiting += 1
            self.send_payload(self.payloads.pop(0))


class _ServerEndpoint(_Endpoint):
    role = "server"

    def __init__(self, world, conn, node):
        super().__init__(world, conn, node)
        self.hs = None

    def on_frame(self, data: bytes) -> None:
        try:
            if self.channel is None:
                config = self.node.accept_config()
                if config is None:
                    raise ChainRejected(RejectReason.ServiceNotAuthorized, "not listening")
                ftype, _ = parse_frame(data)
                if ftype is FrameType.R1 and self.hs is None:
                    self.hs = ResumeResponder(self.node.ctx, config)
                    self.send(self.hs.on_r1(data))
                    self.established(self.hs.channel)
                elif self.hs is None:
                    self.hs = Responder(self.node.ctx, config)
                    m2 = self.hs.on_m1(data)
                    if self.node.adversarial:
                        self.world.adversary.knowledge.add_kex_private(self.hs._kex.private)
                    self.send(m2)
                    if self.hs.done:
                        self._finish()
                else:
                    self.hs.on_m3(data)
                    self._finish()
                return
            pt = self.channel.decrypt(data)
            if pt is None:
                return
            self.accepted(pt)
            reply = self.world._server_message(self, pt)
            if reply is not None:
                self.send_payload(reply)
        except DecentError as exc:
            self.fail(exc)

    def _finish(self) -> None:
        self.established(self.hs.channel)
        if self.world.issue_tickets and self.channel.peer is not None:
            self.send(self.channel.issue_ticket())


class SimWorld:
    """A deterministic world; identical seeds give identical event logs."""

    def __init__(
        self,
        seed: int = 0,
        latency: float = 0.001,
        poll_interval: float = 5.0,
        max_missed: int = 3,
        server_code: str = "DecentServer",
        issue_tickets: bool = True,
        start_time: float = 0.0,
    ):
        self.seed = seed
        self.rng = random.Random(seed)
        self.clock = SimClock(start_time)
        self.ias = AttestationService(self._sub_rng(), self.clock)
        self.latency = latency
        self.link_latency: dict[frozenset, float] = {}
        self.poll_interval = poll_interval
        self.max_missed = max_missed
        self.server_code = server_code
        self.issue_tickets = issue_tickets
        self.groups: dict[str, AttestationGroup] = {}
        self.platforms: dict[str, Platform] = {}
        self.hosts: dict[str, Host] = {}
        self.servers: dict[str, DecentServer] = {}
        self.authlists: dict[str, AuthList] = {}
        self.nodes: dict[str, Node] = {}
        self.conns: dict[int, Conn] = {}
        self.secrets: dict[str, bytes] = {}
        self.stakeholders: dict[str, list[crypto.SigningKeyPair]] = {}
        self.eventlog = EventLog()
        self.adversary = Adversary(self, self._sub_rng())
        self.wire: list[FrameEvent] = []
        self.frame_stats = {"total": 0, "malicious": 0}
        self._queue: list = []
        self._seq = itertools.count()
        self._conn_ids = itertools.count(1)
        self._la_ids = itertools.count(1_000_000)
        self._pending_polls: dict[tuple[str, str], float] = {}

    def _sub_rng(self) -> random.Random:
        return random.Random(self.rng.getrandbits(64))

    @property
    def now(self) -> float:
        return self.clock.now()

    @property
    def knowledge(self) -> KnowledgeSet:
        return self.adversary.knowledge

    def log(self, event) -> None:
        self.eventlog.append(event)

    # -- building ----------------------------------------------------------------

    def add_platform(self, platform_id: str, group: str = "g0") -> Platform:
        if group not in self.groups:
            self.groups[group] = AttestationGroup(group, self._sub_rng())
        p = Platform(platform_id, self.groups[group], self.clock, self._sub_rng())
        self.ias.provision(p)
        self.platforms[platform_id] = p
        return p

    def add_host(self, name: str, platform: str, honest: bool = True, server_code: str | None = None) -> Host:
        host = Host(name, self.platforms[platform], honest)
        self.hosts[name] = host
        if platform not in self.servers:
            code = enclave_code(server_code or self.server_code)
            self.servers[platform] = DecentServer(host.platform.load_enclave(code, name), self.ias)
        return host

    def add_authlist(self, name: str, authlist: AuthList) -> AuthList:
        self.authlists[name] = authlist
        return authlist

    def code(self, name: str) -> EnclaveCode:
        return enclave_code(name)

    def _la_tamper(self, host: Host):
        if host.honest:
            return None
        sid = next(self._la_ids)

        def tamper(direction: str, step: int, msg: bytes):
            fe = FrameEvent(self.now, sid, "la", direction, host.name, host.name, msg)
            self.frame_stats["total"] += 1
            self.frame_stats["malicious"] += 1
            self.wire.append(fe)
            out = self.adversary.intercept(fe)
            return out[0][0] if out else None

        return tamper

    def add_component(
        self,
        name: str,
        host: str,
        code: str,
        authlist: str | AuthList,
        *,
        accept: dict | None = None,
        poll: Iterable[str] = (),
        adversarial: bool = False,
        forge_server: str | None = None,
        clone_of: str | None = None,
        exempt_services: Iterable[str] = (),
        service: str | None = None,
    ) -> Node:
        """Start a component. ``adversarial`` components run adversary code and leak their keys."""
        h = self.hosts[host]
        al = self.authlists[authlist] if isinstance(authlist, str) else authlist
        poll = list(poll)
        rcfg = RevokerConfig(tuple(poll) or (DECENT_REVOKER,), self.poll_interval, self.max_missed)
        kwargs = dict(name=name, revoker_config=rcfg, exempt_services=exempt_services)
        if clone_of is not None:
            src = self.nodes[clone_of].ctx
            if clone_of not in self.adversary.leaked:
                raise PermissionError(f"{clone_of}'s key has not been leaked")
            ctx = ComponentContext(src.enclave, src.authlist, src.keypair, src.chain, src.authority_key, **kwargs)
            adversarial = True
        elif forge_server is not None:
            # a server enclave running adversary code: genuinely attested, but
            # signs whatever component certificate the adversary asks for
            evil = DecentServer(h.platform.load_enclave(enclave_code(forge_server), host), self.ias)
            self.knowledge.add_signing_key(evil.keypair.private)
            keypair = crypto.SigningKeyPair.from_private(evil.enclave.random_bytes(32))
            cert = ComponentCertificate.issue(
                evil.keypair, keypair.public, enclave_code(code).measurement, al.encode(), self.now
            )
            ctx = ComponentContext(evil.enclave, al, keypair, CertChain(evil.sa_cert, cert), self.ias.public_key, **kwargs)
            adversarial = True
        else:
            enclave = h.platform.load_enclave(enclave_code(code), host)
            ctx = component_init(enclave, al, self.servers[h.platform.platform_id], tamper=self._la_tamper(h), **kwargs)
        node = Node(name, h, ctx, adversarial, accept, service, poll)
        self.nodes[name] = node
        if adversarial:
            if h.honest:
                raise ValueError("adversary components must run on malicious hosts")
            self.leak(name)
        ctx.on_shutdown.append(lambda c, n=name: self.log(ShutDown(self.now, n)))
        if poll:
            self.at(self.now, lambda n=node: self._poll_tick(n))
        return node

    def make_revoker(self, name: str, stakeholders: int = 3, threshold: int = 2, protected: Iterable[str] = ()) -> Revoker:
        node = self.nodes[name]
        keys = self._stakeholders(name, stakeholders)
        node.revoker = Revoker(node.ctx, VerifierPolicy(frozenset(k.public for k in keys), threshold), protected)
        node.accept = node.accept or {"open": True}
        return node.revoker

    def make_verifier(self, name: str, stakeholders: int = 3, threshold: int = 2) -> Verifier:
        node = self.nodes[name]
        keys = self._stakeholders(name, stakeholders)
        node.verifier = Verifier(node.ctx, VerifierPolicy(frozenset(k.public for k in keys), threshold))
        node.accept = node.accept or {"open": True}
        return node.verifier

    def _stakeholders(self, name: str, n: int) -> list[crypto.SigningKeyPair]:
        rng = self._sub_rng()
        self.stakeholders[name] = [crypto.SigningKeyPair.generate(rng) for _ in range(n)]
        return self.stakeholders[name]

    def secret(self, name: str) -> bytes:
        if name not in self.secrets:
            self.secrets[name] = b"SECRET<" + name.encode() + b":" + self.rng.randbytes(16).hex().encode() + b">"
        return self.secrets[name]

    def set_latency(self, host_a: str, host_b: str, latency: float) -> None:
        self.link_latency[frozenset((host_a, host_b))] = latency

    # -- adversary API -------------------------------------------------------------

    def leak(self, name: str) -> None:
        node = self.nodes[name]
        self.knowledge.add_signing_key(node.ctx.keypair.private)
        self.knowledge.add(node.ctx.chain.encode())
        self.adversary.leaked.add(name)

    def leak_secret(self, kind: str) -> None:
        if kind in UNLEAKABLE:
            raise NotLeakable(f"{kind} keys stay inside the hardware / authority")
        raise ValueError(f"unknown secret kind {kind!r}")

    # -- scheduling ----------------------------------------------------------------

    def at(self, t: float, fn: Callable[[], None]) -> None:
        heapq.heappush(self._queue, (max(t, self.now), next(self._seq), fn))

    def after(self, dt: float, fn: Callable[[], None]) -> None:
        self.at(self.now + dt, fn)

    def run(self, until: float | None = None) -> EventLog:
        while self._queue:
            t, _, fn = self._queue[0]
            if until is not None and t > until:
                break
            heapq.heappop(self._queue)
            if t > self.now:
                self.clock.set(t)
            fn()
        if until is not None and until > self.now:
            self.clock.set(until)
        return self.eventlog

    # -- connections -----------------------------------------------------------------

    def _latency(self, conn: Conn) -> float:
        return self.link_latency.get(frozenset((conn.client.host.name, conn.server.host.name)), self.latency)

    def open(
        self,
        src: str,
        dst: str,
        service: str,
        *,
        verifier_service: str | None = None,
        payloads: Iterable[bytes] = (),
        resume: bool = False,
        purpose: str = "app",
        verifier_of_verifier_service: str | None = None,
    ) -> Conn:
        client, server = self.nodes[src], self.nodes[dst]
        conn = Conn(self, next(self._conn_ids), client, server, purpose)
        self.conns[conn.id] = conn
        config = client.ctx.connect_config(service, verifier_service, verifier_of_verifier_service)
        conn.client_ep = _ClientEndpoint(self, conn, client, config, list(payloads), resume, service)
        conn.server_ep = _ServerEndpoint(self, conn, server)
        if client.ctx.state is not State.RUNNING:
            self.log(Rejected(self.now, src, "ComponentShutDown"))
            return conn
        conn.client_ep.start()
        return conn

    def connect(self, at: float, src: str, dst: str, service: str, **kw) -> None:
        self.at(at, lambda: self.open(src, dst, service, **kw))

    def _transmit(self, conn: Conn, direction: str, data: bytes) -> None:
        src, dst = (conn.client, conn.server) if direction == "c2s" else (conn.server, conn.client)
        fe = FrameEvent(self.now, conn.id, conn.purpose, direction, src.name, dst.name, data)
        self.wire.append(fe)
        self.frame_stats["total"] += 1
        if conn.malicious:
            self.frame_stats["malicious"] += 1
            for out, extra in self.adversary.intercept(fe):
                self._schedule_delivery(conn, direction, out, extra)
        else:
            self._schedule_delivery(conn, direction, data, 0.0)

    def _schedule_delivery(self, conn: Conn, direction: str, data: bytes, extra: float) -> None:
        ep = conn.server_ep if direction == "c2s" else conn.client_ep

        def deliver():
            if ep.node.ctx.state is State.RUNNING and not ep.dead:
                ep.on_frame(data)

        self.after(self._latency(conn) + extra, deliver)

    # -- application behaviour ------------------------------------------------------

    def _server_message(self, ep: _ServerEndpoint, payload: bytes) -> bytes | None:
        node = ep.node
        if ep.conn.purpose == "poll" and node.revoker is not None:
            return node.revoker.handle_poll(payload)
        if ep.conn.purpose == "verify" and node.verifier is not None:
            return node.verifier.handle_message(payload)
        if ep.conn.purpose == "app":
            return b"ack:" + crypto.hash(payload)[:8].hex().encode()
        return None

    def _client_message(self, ep: _ClientEndpoint, payload: bytes) -> None:
        node = ep.node
        if ep.conn.purpose == "poll":
            peer = ep.channel.peer
            try:
                corl = parse_poll_reply(payload)
            except DecentError:
                corl = None
            if corl is not None and peer is not None and corl.revoker_identity == peer.measurement:
                node.ctx.record_poll(ep.conn.server.name, corl, peer.public_key)
            else:
                node.ctx.record_poll(ep.conn.server.name, None)
            self._pending_polls.pop((node.name, ep.conn.server.name), None)
        elif ep.conn.purpose == "verify":
            result = parse_result(payload)
            if isinstance(result, tuple):
                node.ctx.attach_verification(*result)
                self.log(Note(self.now, f"{node.name} verified as {result[0].target_service}"))
            else:
                self.log(Rejected(self.now, node.name, f"verification:{result}"))

    # -- revocation ----------------------------------------------------------------

    def _poll_tick(self, node: Node) -> None:
        ctx = node.ctx
        if ctx.state is not State.RUNNING:
            return
        for target in node.poll_targets:
            if (node.name, target) in self._pending_polls:
                del self._pending_polls[(node.name, target)]
                ctx.poll_failed(target)
                if ctx.state is not State.RUNNING:
                    return
        if not ctx.check_liveness():
            return
        for target in node.poll_targets:
            ctx.poll_started(target)
            self._pending_polls[(node.name, target)] = self.now
            view = ctx.corl_view(self.nodes[target].ctx.measurement)
            service = self.nodes[target].service or DECENT_REVOKER
            self.open(node.name, target, service, payloads=[poll_request(view.seq if view else 0)], purpose="poll")
        self.at(ctx.liveness_deadline(), ctx.check_liveness)
        self.after(self.poll_interval, lambda: self._poll_tick(node))

    def revoke(self, at: float, target: str, revoker: str) -> None:
        def go():
            rv = self.nodes[revoker].revoker
            digest = self.nodes[target].ctx.measurement if target in self.nodes else bytes.fromhex(target)
            for k in self.stakeholders[revoker][: rv.policy.threshold]:
                if rv.submit_revocation(RevocationRequest.create(k, digest)):
                    self.log(Revoked(self.now, digest))

        self.at(at, go)

    def submit_key_evidence(self, at: float, target: str, revoker: str) -> None:
        def go():
            node = self.nodes[target]
            if target not in self.adversary.leaked:
                raise PermissionError("only leaked keys can be submitted as evidence")
            before = self.nodes[revoker].revoker.get_corl().seq
            digest = self.nodes[revoker].revoker.submit_key_evidence(node.ctx.keypair.private, node.ctx.chain)
            if self.nodes[revoker].revoker.get_corl().seq != before:
                self.log(Revoked(self.now, digest))

        self.at(at, go)

    def verify(self, at: float, candidate: str, verifier: str, service: str, verifier_service: str) -> None:
        def go():
            vnode = self.nodes[verifier]
            cnode = self.nodes[candidate]
            for k in self.stakeholders[verifier][: vnode.verifier.policy.threshold]:
                vnode.verifier.submit_approval(StakeholderApproval.create(k, cnode.ctx.measurement, service))
            msg = verification_message(cnode.ctx.chain, service)
            self.open(candidate, verifier, verifier_service, payloads=[msg], purpose="verify")

        self.at(at, go)

    def adversary_verify(self, candidate: str, by: str, service: str) -> None:
        """An adversary-run verifier vouches for an adversary component."""
        from ..certs import VerifiedAppCertificate

        cand, ver = self.nodes[candidate], self.nodes[by]
        if not (cand.adversarial and ver.adversarial):
            raise PermissionError("the adversary can only sign with keys it owns")
        cert = VerifiedAppCertificate.issue(ver.ctx.keypair, cand.ctx.chain.component, service)
        cand.ctx.attach_verification(cert, ver.ctx.chain)

    # -- verdicts --------------------------------------------------------------------

    def assert_secrecy(self, secret: bytes) -> bool:
        return not self.knowledge.knows(secret)

    def assert_authenticity(self) -> bool:
        return check_authenticity(self.eventlog)


def assert_secrecy(world: SimWorld, secret_bytes: bytes) -> bool:
    return world.assert_secrecy(secret_bytes)


def assert_authenticity(log: EventLog) -> bool:
    return check_authenticity(log)


def adversary_leak_component_key(world: SimWorld, component: str) -> None:
    world.leak(component)


def world_build(config) -> SimWorld:
    from .scenario import build_world

    return build_world(config)
