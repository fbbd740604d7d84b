"""DecentHT: a Chord ring whose nodes are Decent components.

Node identifiers come from the component's seal key, so one binary with one
AuthList on one CPU always lands on the same ring position. Nodes talk over
Decent channels (cached per peer) and keep records sealed at rest; the
``storage`` dict of each node is what its host can see.

Lookups are iterative: the requester contacts every hop itself.
"""

from __future__ import annotations

import bisect
import threading
from dataclasses import dataclass, field

from . import crypto, errors, tlv
from .channel import SecureChannel, connect_pair
from .component import ComponentContext, SealedBlob
from .errors import AuthFailure, DecentError, KeyNotFound, LookupFailed, MalformedEncoding, TransportError

SERVICE = "DecentHT"
CLIENT_SERVICE = "DecentHTClient"
RING_BITS = 64
RING_SIZE = 1 << RING_BITS
MAX_HOPS = 2 * RING_BITS
NODE_ID_INFO = b"decentht-node-id"
RECORD_LABEL = b"decentht-record\0"


def hash64(key: bytes) -> int:
    return int.from_bytes(crypto.hash(key)[:8], "big")


def node_id(ctx: ComponentContext) -> int:
    return int.from_bytes(crypto.hkdf(ctx.seal_ikm(), ctx.authlist.hash, NODE_ID_INFO)[:8], "big")


def evenly_spaced_ids(n: int) -> list[int]:
    """Ids ``k * 2**64 / n``; used when Sybil resistance is switched off for benchmarks."""
    return [k * RING_SIZE // n for k in range(n)]


def in_half_open(x: int, a: int, b: int) -> bool:
    """x in (a, b] on the ring. (a, a] is the whole ring."""
    if a == b:
        return True
    if a < b:
        return a < x <= b
    return x > a or x <= b


def in_open(x: int, a: int, b: int) -> bool:
    """x in (a, b) on the ring. (a, a) is everything except a."""
    if a == b:
        return x != a
    if a < b:
        return a < x < b
    return x > a or x < b


def oracle_successor(ids, key_id: int) -> int:
    """Brute-force successor over a sorted id list (the smallest id >= key_id, wrapping)."""
    s = sorted(ids)
    i = bisect.bisect_left(s, key_id)
    return s[i % len(s)]


@dataclass(frozen=True, order=True)
class NodeRef:
    id: int
    address: str

    def encode(self) -> bytes:
        return tlv.pack([(1, tlv.u64(self.id)), (2, self.address.encode())])

    @classmethod
    def decode(cls, data: bytes) -> "NodeRef":
        f = tlv.unpack(data, [1, 2])
        return cls(tlv.read_u64(f[1]), f[2].decode())


# -- wire messages ---------------------------------------------------------------

OP_FIND = 1
OP_GET_PREDECESSOR = 2
OP_NOTIFY = 3
OP_GET = 4
OP_PUT = 5
OP_TRANSFER = 6

ST_OK = 0
ST_NEXT = 1
ST_NOT_FOUND = 2
ST_REDIRECT = 3
ST_DENIED = 4
ST_ERROR = 5

_NODE_OPS = {OP_FIND, OP_GET_PREDECESSOR, OP_NOTIFY, OP_GET, OP_PUT, OP_TRANSFER}
_CLIENT_OPS = {OP_FIND, OP_GET, OP_PUT}


def request(op: int, *fields: tuple[int, bytes]) -> bytes:
    return tlv.pack([(1, tlv.u8(op)), *fields])


def reply(status: int, *fields: tuple[int, bytes]) -> bytes:
    return tlv.pack([(1, tlv.u8(status)), *fields])


def _fields(data: bytes) -> dict[int, bytes]:
    out: dict[int, bytes] = {}
    for tag, value in tlv.iter_fields(data):
        if tag in out:
            raise MalformedEncoding(f"repeated field {tag}")
        out[tag] = value
    if 1 not in out:
        raise MalformedEncoding("missing op/status")
    return out


def _pack_items(items: list[tuple[bytes, bytes]]) -> bytes:
    return b"".join(tlv.pack([(1, k), (2, v)]) for k, v in items)


def _unpack_items(data: bytes) -> list[tuple[bytes, bytes]]:
    fields = list(tlv.iter_fields(data))
    if len(fields) % 2 or any(t != 1 + (i % 2) for i, (t, _) in enumerate(fields)):
        raise MalformedEncoding("bad transfer list")
    return [(fields[i][1], fields[i + 1][1]) for i in range(0, len(fields), 2)]


# -- network -----------------------------------------------------------------------


@dataclass
class NetStats:
    handshakes: int = 0
    messages: int = 0


class Network:
    """In-process message fabric. Every call rides on a Decent channel.

    Channels are cached per (caller, callee, listener) so repeated calls reuse
    one session, as a long-lived TCP connection would.
    """

    def __init__(self):
        self.nodes: dict[str, "DhtNode"] = {}
        self.stats = NetStats()
        self._channels: dict[tuple[str, str, str], tuple[SecureChannel, SecureChannel]] = {}
        self._down: set[str] = set()

    def register(self, node: "DhtNode") -> None:
        if node.address in self.nodes:
            raise ValueError(f"address {node.address} already in use")
        self.nodes[node.address] = node

    def set_down(self, address: str, down: bool = True) -> None:
        (self._down.add if down else self._down.discard)(address)

    def _channel(self, caller: ComponentContext, caller_addr: str, target: "DhtNode", listener: str):
        key = (caller_addr, target.address, listener)
        pair = self._channels.get(key)
        if pair is None or pair[0].closed or pair[1].closed:
            pair = connect_pair(
                caller,
                target.ctx,
                caller.connect_config(SERVICE),
                target.ctx.accept_config(listener),
            )
            caller.track(pair[0])
            target.ctx.track(pair[1])
            self.stats.handshakes += 1
            self._channels[key] = pair
        return pair

    def call(self, caller: ComponentContext, caller_addr: str, address: str, msg: bytes, listener: str = SERVICE) -> bytes:
        target = self.nodes.get(address)
        if target is None or address in self._down:
            raise TransportError(f"{address} unreachable")
        client, server = self._channel(caller, caller_addr, target, listener)
        self.stats.messages += 1
        inbound = server.decrypt(client.encrypt(msg))
        out = target.handle(inbound, server.peer, listener)
        return client.decrypt(server.encrypt(out))


# -- node --------------------------------------------------------------------------


@dataclass
class LookupResult:
    node: NodeRef
    hops: int


class DhtNode:
    """One DecentHT component.

    ``storage`` maps record keys to encoded sealed blobs and models what the
    untrusted host keeps on disk.
    """

    def __init__(self, ctx: ComponentContext, network: Network, address: str | None = None, id_override: int | None = None):
        self.ctx = ctx
        self.network = network
        self.address = address or ctx.name
        self.id = node_id(ctx) if id_override is None else id_override % RING_SIZE
        self.ref = NodeRef(self.id, self.address)
        self.successor = self.ref
        self.predecessor: NodeRef | None = None
        self.fingers: list[NodeRef] = [self.ref] * RING_BITS
        self.storage: dict[bytes, bytes] = {}
        self._lock = threading.RLock()
        network.register(self)

    def __repr__(self) -> str:
        return f"DhtNode({self.address}, id={self.id:016x})"

    # -- outbound ----------------------------------------------------------------

    def _rpc(self, ref: NodeRef, msg: bytes) -> dict[int, bytes]:
        if ref.address == self.address:
            raw = self.handle(msg, None, SERVICE, local=True)
        else:
            raw = self.network.call(self.ctx, self.address, ref.address, msg)
        return _fields(raw)

    def find_successor(self, key_id: int, start: NodeRef | None = None) -> LookupResult:
        """Iterative lookup; hops counts remote queries."""
        return iterative_lookup(self._rpc, start or self.ref, key_id, local=self.address)

    def join(self, bootstrap: NodeRef | None) -> None:
        """Join the ring known to ``bootstrap`` (None starts a new ring).

        Handshake rejections propagate unchanged; the ring is not modified.
        """
        with self._lock:
            self.predecessor = None
            if bootstrap is None:
                self.successor = self.ref
            else:
                self.successor = self.find_successor(self.id, bootstrap).node
            self.fingers[0] = self.successor

    def stabilize(self) -> bool:
        """One Chord stabilize round. Returns True when the successor changed."""
        with self._lock:
            before = self.successor
            f = self._rpc(self.successor, request(OP_GET_PREDECESSOR))
            if 2 in f:
                x = NodeRef.decode(f[2])
                if in_open(x.id, self.id, self.successor.id):
                    self.successor = x
            self.fingers[0] = self.successor
            self._rpc(self.successor, request(OP_NOTIFY, (2, self.ref.encode())))
            return self.successor != before

    def fix_fingers(self) -> None:
        with self._lock:
            self.fingers[0] = self.successor
            for i in range(1, RING_BITS):
                start = (self.id + (1 << i)) % RING_SIZE
                prev = self.fingers[i - 1]
                if in_half_open(start, self.id, prev.id) and prev != self.ref:
                    self.fingers[i] = prev
                else:
                    self.fingers[i] = self.find_successor(start).node

    def closest_preceding(self, key_id: int) -> NodeRef:
        for f in reversed(self.fingers):
            if in_open(f.id, self.id, key_id):
                return f
        return self.ref

    def responsible_for(self, key_id: int) -> bool:
        pred = self.predecessor
        return pred is None or in_half_open(key_id, pred.id, self.id)

    # -- storage -----------------------------------------------------------------

    def _label(self, key: bytes) -> bytes:
        return RECORD_LABEL + key

    def _store(self, key: bytes, value: bytes) -> None:
        self.storage[key] = self.ctx.seal(self._label(key), value).encode()

    def _load(self, key: bytes) -> bytes:
        blob = self.storage.get(key)
        if blob is None:
            raise KeyNotFound(key)
        sealed = SealedBlob.decode(blob)
        if sealed.label != self._label(key):
            raise AuthFailure("record stored under a different key")
        return self.ctx.unseal(sealed)

    def _hand_over(self, new_pred: NodeRef) -> None:
        """Move records no longer in (new_pred, self] to the new predecessor."""
        moving = [k for k in self.storage if not in_half_open(hash64(k), new_pred.id, self.id)]
        if not moving or new_pred.address == self.address:
            return
        items = [(k, self._load(k)) for k in moving]
        f = self._rpc(new_pred, request(OP_TRANSFER, (2, _pack_items(items))))
        if tlv.read_u8(f[1]) == ST_OK:
            for k in moving:
                del self.storage[k]

    # -- inbound -----------------------------------------------------------------

    def handle(self, msg: bytes, peer, listener: str, local: bool = False) -> bytes:
        try:
            f = _fields(msg)
            op = tlv.read_u8(f[1])
            allowed = _NODE_OPS if (local or listener == SERVICE) else _CLIENT_OPS
            if op not in allowed:
                return reply(ST_DENIED)
            with self._lock:
                return self._dispatch(op, f)
        except KeyNotFound:
            return reply(ST_NOT_FOUND)
        except DecentError as exc:
            return reply(ST_ERROR, (2, type(exc).__name__.encode()))

    def _dispatch(self, op: int, f: dict[int, bytes]) -> bytes:
        if op == OP_FIND:
            key_id = tlv.read_u64(f[2])
            if in_half_open(key_id, self.id, self.successor.id):
                return reply(ST_OK, (2, self.successor.encode()))
            nxt = self.closest_preceding(key_id)
            if nxt == self.ref:  # fingers not built yet: walk the successor pointers
                nxt = self.successor
            return reply(ST_NEXT, (2, nxt.encode()))
        if op == OP_GET_PREDECESSOR:
            return reply(ST_OK, (2, self.predecessor.encode()) if self.predecessor else (2, None))
        if op == OP_NOTIFY:
            cand = NodeRef.decode(f[2])
            if self.predecessor is None or in_open(cand.id, self.predecessor.id, self.id):
                self.predecessor = cand
                self._hand_over(cand)
            return reply(ST_OK)
        if op in (OP_GET, OP_PUT):
            key = f[2]
            if not self.responsible_for(hash64(key)):
                return reply(ST_REDIRECT, (2, self.find_successor(hash64(key)).node.encode()))
            if op == OP_GET:
                return reply(ST_OK, (2, self._load(key)))
            self._store(key, f[3])
            return reply(ST_OK)
        if op == OP_TRANSFER:
            for k, v in _unpack_items(f[2]):
                self._store(k, v)
            return reply(ST_OK)
        return reply(ST_DENIED)


def iterative_lookup(rpc, start: NodeRef, key_id: int, local: str | None = None) -> LookupResult:
    """Walk the ring from ``start``; ``rpc(ref, msg)`` performs one query."""
    cur = start
    hops = 0
    for _ in range(MAX_HOPS):
        try:
            f = rpc(cur, request(OP_FIND, (2, tlv.u64(key_id))))
        except TransportError as exc:  # handshake rejections propagate unchanged
            raise LookupFailed(f"query to {cur.address} failed: {exc}") from exc
        if cur.address != local:
            hops += 1
        status = tlv.read_u8(f[1])
        if status == ST_OK:
            return LookupResult(NodeRef.decode(f[2]), hops)
        if status != ST_NEXT:
            raise LookupFailed(f"{cur.address} answered status {status}")
        cur = NodeRef.decode(f[2])
    raise LookupFailed(f"no answer after {MAX_HOPS} hops")


# -- clients -------------------------------------------------------------------------


class DhtClient:
    """An application component using the ring through an entry node."""

    def __init__(self, ctx: ComponentContext, network: Network, entry: str, address: str | None = None):
        self.ctx = ctx
        self.network = network
        self.entry = network.nodes[entry].ref
        self.address = address or ctx.name
        self.hops: list[int] = []

    def _rpc(self, ref: NodeRef, msg: bytes) -> dict[int, bytes]:
        return _fields(self.network.call(self.ctx, self.address, ref.address, msg, CLIENT_SERVICE))

    def lookup(self, key: bytes) -> LookupResult:
        res = iterative_lookup(self._rpc, self.entry, hash64(key))
        self.hops.append(res.hops)
        return res

    def _data_op(self, msg: bytes, key: bytes) -> dict[int, bytes]:
        target = self.lookup(key).node
        for _ in range(MAX_HOPS):
            f = self._rpc(target, msg)
            status = tlv.read_u8(f[1])
            if status == ST_REDIRECT:
                target = NodeRef.decode(f[2])
                continue
            if status == ST_NOT_FOUND:
                raise KeyNotFound(key)
            if status == ST_ERROR:
                raise _remote_error(f.get(2, b""))
            if status != ST_OK:
                raise LookupFailed(f"status {status}")
            return f
        raise LookupFailed("redirect loop")

    def put(self, key: bytes, value: bytes) -> None:
        self._data_op(request(OP_PUT, (2, key), (3, value)), key)

    def get(self, key: bytes) -> bytes:
        return self._data_op(request(OP_GET, (2, key)), key)[2]


def _remote_error(name: bytes) -> DecentError:
    cls = getattr(errors, name.decode(errors="replace"), None)
    if isinstance(cls, type) and issubclass(cls, DecentError):
        return cls("raised by the storing node")
    return DecentError(name.decode(errors="replace"))


# -- ring helpers ----------------------------------------------------------------


@dataclass
class Ring:
    network: Network = field(default_factory=Network)
    members: list[DhtNode] = field(default_factory=list)

    def add(self, ctx: ComponentContext, id_override: int | None = None, bootstrap: DhtNode | None = None) -> DhtNode:
        node = DhtNode(ctx, self.network, id_override=id_override)
        try:
            boot = bootstrap or (self.members[0] if self.members else None)
            node.join(boot.ref if boot else None)
        except DecentError:
            del self.network.nodes[node.address]
            raise
        self.members.append(node)
        return node

    def quiesce(self, max_rounds: int = 200) -> int:
        """Stabilize until no successor or predecessor changes, then fix every finger table."""
        rounds = 0
        for rounds in range(1, max_rounds + 1):
            before = [(n.successor, n.predecessor) for n in self.members]
            for n in self.members:
                n.stabilize()
            if before == [(n.successor, n.predecessor) for n in self.members]:
                break
        for n in self.members:
            n.fix_fingers()
        return rounds

    @property
    def ids(self) -> list[int]:
        return sorted(n.id for n in self.members)

    def oracle(self, key: bytes) -> int:
        return oracle_successor(self.ids, hash64(key))

    def consistent(self) -> bool:
        """Successor/predecessor pointers form the sorted ring and fingers match the oracle."""
        ids = self.ids
        by_id = {n.id: n for n in self.members}
        for i, nid in enumerate(ids):
            n = by_id[nid]
            if n.successor.id != ids[(i + 1) % len(ids)] or (n.predecessor and n.predecessor.id != ids[i - 1]):
                return False
            if n.predecessor is None and len(ids) > 1:
                return False
            for k, f in enumerate(n.fingers):
                if f.id != oracle_successor(ids, (nid + (1 << k)) % RING_SIZE):
                    return False
        return True

    def placement_ok(self) -> bool:
        """Every stored record sits on exactly one node, the oracle successor of its key."""
        seen: dict[bytes, int] = {}
        for n in self.members:
            for k in n.storage:
                if k in seen:
                    return False
                seen[k] = n.id
        return all(self.oracle(k) == nid for k, nid in seen.items())

    def storage_dump(self) -> bytes:
        return b"".join(k + v for n in self.members for k, v in sorted(n.storage.items()))


# -- simulator glue ----------------------------------------------------------------


def _world_ring(world) -> Ring:
    ring = getattr(world, "dht_ring", None)
    if ring is None:
        ring = world.dht_ring = Ring()
        world.dht_results = []
    return ring


def scenario_action(world, action: dict) -> None:
    """Run one DHT step inside a simulator world. Outcomes are logged as notes.

    Supported ``op`` values: ``join`` (``nodes``), ``quiesce``, ``put`` /
    ``get`` (``client``, ``entry``, ``key``, ``value``) and ``tamper``
    (``node``, ``key``: the host flips a byte of the stored blob).
    """
    from .netsim.events import Note

    ring = _world_ring(world)
    op = action["op"]
    if op == "join":
        for name in action["nodes"]:
            try:
                ring.add(world.nodes[name].ctx)
                outcome = "joined"
            except DecentError as exc:
                outcome = f"join failed: {getattr(getattr(exc, 'reason', None), 'name', type(exc).__name__)}"
            world.dht_results.append((name, op, outcome))
            world.log(Note(world.now, f"dht {name} {outcome}"))
    elif op == "quiesce":
        rounds = ring.quiesce()
        world.log(Note(world.now, f"dht quiesced after {rounds} rounds"))
    elif op in ("put", "get"):
        name = action["client"]
        clients = world.__dict__.setdefault("dht_clients", {})
        if name not in clients:
            clients[name] = DhtClient(world.nodes[name].ctx, ring.network, action["entry"], address=name)
        client = clients[name]
        key = action["key"].encode()
        try:
            if op == "put":
                client.put(key, _value(world, action["value"]))
                outcome = "ok"
            else:
                got = client.get(key)
                want = action.get("expect")
                outcome = "ok" if want is None or got == _value(world, want) else "mismatch"
        except DecentError as exc:
            outcome = type(exc).__name__
        world.dht_results.append((name, f"{op}:{action['key']}", outcome))
        world.log(Note(world.now, f"dht {name} {op} {action['key']} {outcome}"))
    elif op == "tamper":
        key = action["key"].encode()
        if action["node"].startswith("@"):  # whichever node stores the key
            node = next(n for n in ring.members if key in n.storage)
        else:
            node = ring.network.nodes[action["node"]]
        blob = bytearray(node.storage[key])
        blob[-1] ^= 1
        node.storage[key] = bytes(blob)
        world.log(Note(world.now, f"dht host of {node.address} modified {action['key']}"))
    else:
        raise ValueError(f"unknown dht op {op!r}")


def _value(world, v: str) -> bytes:
    return world.secret(v[len("secret:") :]) if v.startswith("secret:") else v.encode()


def scenario_consistent(world) -> bool:
    ring = getattr(world, "dht_ring", None)
    if ring is None or not ring.members:
        return False
    return ring.consistent() and ring.placement_ok()


__all__ = [
    "CLIENT_SERVICE",
    "DhtClient",
    "DhtNode",
    "LookupResult",
    "Network",
    "NodeRef",
    "Ring",
    "SERVICE",
    "evenly_spaced_ids",
    "hash64",
    "in_half_open",
    "in_open",
    "iterative_lookup",
    "node_id",
    "oracle_successor",
]
