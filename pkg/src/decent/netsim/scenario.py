"""Declarative scenarios (YAML) for the simulator, plus their assertions.

Top-level keys: ``name``, ``seed``, ``until``, ``world``, ``platforms``,
``hosts``, ``authlists``, ``components``, ``adversary``, ``actions``,
``assert``. See ``docs/scenarios.md`` for the full format.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from ..authlist import AuthList, AuthListEntry
from ..platform import enclave_code
from .events import Established, EventLog, Rejected, Revoked, ShutDown
from .world import SimWorld, match_rule

_HEX64 = re.compile(r"[0-9a-fA-F]{64}")


class ScenarioError(ValueError):
    pass


@dataclass
class Check:
    name: str
    ok: bool
    detail: str = ""


@dataclass
class ScenarioResult:
    name: str
    seed: int
    world: SimWorld
    log: EventLog
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)

    def summary(self) -> str:
        lines = [f"scenario {self.name} seed={self.seed} events={len(self.log)} log={self.log.digest()[:16]}"]
        for c in self.checks:
            lines.append(f"  [{'PASS' if c.ok else 'FAIL'}] {c.name}" + (f": {c.detail}" if c.detail else ""))
        return "\n".join(lines)


def builtin_names() -> list[str]:
    pkg = resources.files("decent") / "scenarios"
    return sorted(p.name[:-5] for p in pkg.iterdir() if p.name.endswith(".yaml"))


def load(source: str | Path | dict) -> dict:
    """Load a scenario from a dict, a file path or the name of a built-in scenario."""
    if isinstance(source, dict):
        return source
    path = Path(source)
    if not path.exists():
        builtin = resources.files("decent") / "scenarios" / f"{source}.yaml"
        if not builtin.is_file():
            raise ScenarioError(f"no scenario file or built-in named {source!r}")
        text = builtin.read_text()
    else:
        text = path.read_text()
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"invalid YAML: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ScenarioError("scenario must be a mapping")
    return cfg


def _digest(ref: str) -> bytes:
    return bytes.fromhex(ref) if _HEX64.fullmatch(ref) else enclave_code(ref).measurement


def _entry(item) -> AuthListEntry:
    if isinstance(item, (list, tuple)) and len(item) == 2:
        return AuthListEntry(_digest(str(item[0])), str(item[1]))
    if isinstance(item, dict):
        nested = item.get("nested")
        return AuthListEntry(
            _digest(str(item["code"])),
            str(item["service"]),
            AuthList(_entry(n) for n in nested) if nested else None,
        )
    raise ScenarioError(f"bad AuthList entry {item!r}")


def parse_authlist(items) -> AuthList:
    try:
        return AuthList(_entry(i) for i in items)
    except (ValueError, KeyError) as exc:
        raise ScenarioError(f"bad AuthList: {exc}") from exc


def build_world(cfg: dict, seed: int | None = None) -> SimWorld:
    cfg = load(cfg)
    w = cfg.get("world", {}) or {}
    world = SimWorld(
        seed=cfg.get("seed", 0) if seed is None else seed,
        latency=float(w.get("latency", 0.001)),
        poll_interval=float(w.get("poll_interval", 5.0)),
        max_missed=int(w.get("max_missed", 3)),
        server_code=w.get("server_code", "DecentServer"),
        issue_tickets=bool(w.get("tickets", True)),
    )
    try:
        for p in cfg.get("platforms", []):
            world.add_platform(p["id"], p.get("group", "g0"))
        for h in cfg.get("hosts", []):
            world.add_host(h["name"], h["platform"], bool(h.get("honest", True)), h.get("server_code"))
        for name, items in (cfg.get("authlists") or {}).items():
            world.add_authlist(name, parse_authlist(items))
        for c in cfg.get("components", []):
            _add_component(world, c, adversarial=False)
        adv = cfg.get("adversary", {}) or {}
        for c in adv.get("components", []):
            _add_component(world, c, adversarial=True)
        for name in adv.get("leak", []):
            world.leak(name)
        for c in adv.get("clones", []):
            world.add_component(
                c["name"], c["host"], "", world.nodes[c["of"]].ctx.authlist, clone_of=c["of"], accept=c.get("accept")
            )
        for v in adv.get("self_verify", []):
            world.adversary_verify(v["candidate"], v["by"], v["service"])
        for r in adv.get("rules", []):
            r = dict(r)
            world.adversary.add_rule(match_rule(r.pop("action"), **r))
        world.adversary.fuzz_probability = float(adv.get("fuzz", 0.0))
    except KeyError as exc:
        raise ScenarioError(f"missing key {exc}") from exc
    for a in cfg.get("actions", []):
        _schedule(world, a)
    return world


def _add_component(world: SimWorld, c: dict, adversarial: bool) -> None:
    role = c.get("role")
    world.add_component(
        c["name"],
        c["host"],
        c["code"],
        c["authlist"],
        accept=c.get("accept"),
        poll=c.get("poll", []),
        adversarial=adversarial,
        forge_server=c.get("forge_server"),
        exempt_services=c.get("exempt", []),
        service=c.get("service"),
    )
    if role == "revoker":
        world.make_revoker(c["name"], c.get("stakeholders", 3), c.get("threshold", 2), c.get("protected", []))
    elif role == "verifier":
        world.make_verifier(c["name"], c.get("stakeholders", 3), c.get("threshold", 2))


def _payload(world: SimWorld, item: str) -> bytes:
    if item.startswith("secret:"):
        return world.secret(item[len("secret:") :])
    return item.encode()


def _schedule(world: SimWorld, a: dict) -> None:
    at = float(a.get("at", 0.0))
    if "connect" in a:
        c = a["connect"]
        world.at(
            at,
            lambda c=c: world.open(
                c["from"],
                c["to"],
                c["service"],
                verifier_service=c.get("verifier_service"),
                payloads=[_payload(world, p) for p in c.get("send", [])],
                resume=bool(c.get("resume", False)),
                verifier_of_verifier_service=c.get("verifier_of_verifier_service"),
            ),
        )
    elif "revoke" in a:
        world.revoke(at, a["revoke"]["target"], a["revoke"]["revoker"])
    elif "key_evidence" in a:
        world.submit_key_evidence(at, a["key_evidence"]["target"], a["key_evidence"]["revoker"])
    elif "verify" in a:
        v = a["verify"]
        world.verify(at, v["candidate"], v["verifier"], v["service"], v["verifier_service"])
    elif "leak" in a:
        world.at(at, lambda n=a["leak"]: world.leak(n))
    elif "dht" in a:
        from .. import dht

        world.at(at, lambda d=a["dht"]: dht.scenario_action(world, d))
    else:
        raise ScenarioError(f"unknown action {a!r}")


def _established(log: EventLog, component: str, peer: bytes | None = None, after: float = -1.0) -> bool:
    return any(
        e.component == component and (peer is None or e.peer_measurement == peer) and e.time >= after
        for e in log.of(Established)
    )


def evaluate(world: SimWorld, cfg: dict) -> list[Check]:
    wanted = cfg.get("assert", {}) or {}
    log = world.eventlog
    checks: list[Check] = []
    for name in wanted.get("secrecy", []):
        secret = world.secret(name)
        checks.append(Check(f"secrecy({name})", world.assert_secrecy(secret)))
    if wanted.get("authenticity"):
        checks.append(Check("authenticity", world.assert_authenticity()))
    for item in wanted.get("established", []):
        peer = world.nodes[item["peer"]].ctx.measurement
        ok = _established(log, item["component"], peer)
        checks.append(Check(f"established({item['component']}->{item['peer']})", ok))
    for item in wanted.get("not_established", []):
        peer = world.nodes[item["peer"]].ctx.measurement
        ok = not _established(log, item["component"], peer, float(item.get("after", -1.0)))
        checks.append(Check(f"not_established({item['component']}->{item['peer']})", ok))
    for item in wanted.get("rejected", []):
        ok = any(
            e.component == item["component"] and e.reason == item["reason"] for e in log.of(Rejected)
        )
        checks.append(Check(f"rejected({item['component']}:{item['reason']})", ok))
    for name, deadline in (wanted.get("shutdown_by") or {}).items():
        times = [e.time for e in log.of(ShutDown) if e.component == name]
        ok = bool(times) and times[0] <= float(deadline) + 1e-9
        checks.append(Check(f"shutdown({name})<= {deadline}", ok, f"at {times[0]:.3f}" if times else "never"))
    for name in wanted.get("running", []):
        ok = not any(e.component == name for e in log.of(ShutDown))
        checks.append(Check(f"running({name})", ok))
    window = wanted.get("revocation_effective_within")
    if window is not None:
        checks.append(_revocation_check(world, float(window)))
    for item in wanted.get("received", []):
        payload = _payload(world, item["payload"])
        ok = payload in world.nodes[item["component"]].received
        checks.append(Check(f"received({item['component']})", ok))
    if wanted.get("dht_consistent"):
        from .. import dht

        checks.append(Check("dht_consistent", dht.scenario_consistent(world)))
    for item in wanted.get("dht_outcomes", []):
        want = (item["component"], item["op"], item["outcome"])
        got = [r for r in getattr(world, "dht_results", []) if r[:2] == want[:2]]
        ok = bool(got) and got[-1] == want
        checks.append(Check(f"dht({item['component']} {item['op']} -> {item['outcome']})", ok, got[-1][2] if got else "no result"))
    for name in wanted.get("dht_at_rest_opaque", []):
        ring = getattr(world, "dht_ring", None)
        ok = ring is not None and world.secret(name) not in ring.storage_dump()
        checks.append(Check(f"dht_at_rest_opaque({name})", ok))
    return checks


def _revocation_check(world: SimWorld, window: float) -> Check:
    """No app handshake with a revoked measurement completes ``window`` after revocation.

    Revoker polls are exempt: the revoker is an open service and serves its
    list to anyone, including revoked components.
    """
    log = world.eventlog
    bad = []
    by_name = {n.name: n.ctx.measurement for n in world.nodes.values()}
    for r in log.of(Revoked):
        for e in log.of(Established):
            if e.time < r.time + window or e.purpose != "app":
                continue
            if e.peer_measurement == r.digest or by_name.get(e.component) == r.digest:
                bad.append(f"{e.component}@{e.time:.3f}")
    return Check(f"revocation_effective_within({window})", not bad, ", ".join(bad))


def run_scenario(source, seed: int | None = None, until: float | None = None) -> ScenarioResult:
    cfg = load(source)
    world = build_world(cfg, seed)
    end = until if until is not None else float(cfg.get("until", 60.0))
    log = world.run(end)
    result = ScenarioResult(cfg.get("name", "scenario"), world.seed, world, log)
    result.checks = evaluate(world, cfg)
    return result
