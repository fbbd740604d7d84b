"""Command-line entry point.

Exit status: 0 on success, 1 when a scenario assertion fails, 2 on usage or
input errors (diagnostics go to stderr).
"""

from __future__ import annotations

import argparse
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from . import bench, crypto, dht
from .authlist import AuthList
from .certs import CertChain
from .errors import DecentError, MalformedEncoding
from .netsim import ScenarioError, builtin_names, run_scenario
from .testbed import Testbed

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc


def _write(out: str | None, data: bytes) -> None:
    if out is None or out == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        Path(out).write_bytes(data)


def _ts(t: float) -> str:
    return datetime.fromtimestamp(t, timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ") + f" ({t:g})"


# -- scenario -------------------------------------------------------------------


def cmd_scenario_run(args) -> int:
    try:
        result = run_scenario(args.scenario, seed=args.seed, until=args.until)
    except (ScenarioError, FileNotFoundError) as exc:
        raise UsageError(str(exc)) from exc
    if args.log:
        print(result.log.to_text(), end="")
    print(result.summary())
    if args.assert_ and not result.passed:
        failed = [c.name for c in result.checks if not c.ok]
        print(f"assertion failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_scenario_list(args) -> int:
    for name in builtin_names():
        print(name)
    return EXIT_OK


# -- bench ----------------------------------------------------------------------


def _bench_setup(args) -> bench.BenchConfig:
    try:
        cfg = bench.load_bench_config(args.config)
        modes = (bench.ChannelMode.parse(args.mode),) if args.mode else cfg.modes
    except OSError as exc:
        raise UsageError(f"cannot read {args.config}: {exc.strerror}") from exc
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad benchmark config: {exc}") from exc
    cfg.modes = modes
    if args.seed is not None:
        cfg.workload = cfg.workload.with_(seed=args.seed)
    return cfg


def _emit_rows(rows, out: str | None) -> None:
    text = bench.rows_to_csv(rows)
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)
        print(f"wrote {len(rows)} rows to {out}", file=sys.stderr)


def cmd_bench_sweep(args) -> int:
    cfg = _bench_setup(args)
    rows = []
    for mode in cfg.modes:
        rows.extend(bench.run_sweep(cfg.workload, mode, cfg.costs))
    _emit_rows(rows, args.out)
    return EXIT_OK


def cmd_bench_latency(args) -> int:
    cfg = _bench_setup(args)
    if not cfg.latency_targets:
        raise UsageError("config has no bench.latency.targets")
    rows = []
    for mode in cfg.modes:
        rows.extend(
            bench.run_latency_curve(
                cfg.workload, mode, cfg.latency_targets, cfg.latency_requests_per_session, cfg.costs
            )
        )
    _emit_rows(rows, args.out)
    return EXIT_OK


def cmd_bench_nodes(args) -> int:
    cfg = _bench_setup(args)
    counts = cfg.node_counts or (3, 4, 5, 6)
    target = cfg.latency_targets[0] if cfg.latency_targets else 100.0
    rows = bench.run_node_scaling(
        cfg.workload, cfg.modes, counts, cfg.latency_requests_per_session, target, cfg.costs
    )
    _emit_rows(rows, args.out)
    return EXIT_OK


# -- cert -----------------------------------------------------------------------


def describe_chain(chain: CertChain, authority_key: bytes | None = None, indent: str = "") -> list[str]:
    sa, comp = chain.sa, chain.component
    report = sa.ias_report
    if authority_key is None:
        ias_sig = "not checked (no --authority key)"
    else:
        ias_sig = "valid" if report.verify(authority_key) else "INVALID"
    lines = [
        "SA certificate",
        f"  server key:          {sa.server_public_key.hex()}",
        f"  server measurement:  {sa.server_measurement.hex()}",
        f"  validity:            {_ts(sa.not_before)} .. {_ts(sa.not_after)}",
        f"  self-signature:      {'valid' if sa.signature_valid() else 'INVALID'}",
        f"  IAS verdict:         {report.verdict.name}",
        f"  IAS group:           {report.group_id}",
        f"  IAS timestamp:       {_ts(report.timestamp)}",
        f"  IAS signature:       {ias_sig}",
        f"  key bound in report: {'yes' if report.report_data[:32] == crypto.fingerprint(sa.server_public_key) else 'no'}",
        "component certificate",
        f"  component key:       {comp.component_public_key.hex()}",
        f"  measurement:         {comp.component_measurement.hex()}",
        f"  issued at:           {_ts(comp.issued_at)}",
        f"  server signature:    {'valid' if comp.signature_valid(sa.server_public_key) else 'INVALID'}",
        f"  AuthList hash:       {chain.authlist_hash.hex()}",
    ]
    try:
        al = AuthList.decode(comp.authlist_bytes)
        lines.append(f"  AuthList ({len(al)} entries):")
        lines += ["    " + ln for ln in al.to_text().splitlines()]
    except MalformedEncoding as exc:
        lines.append(f"  AuthList:            undecodable ({exc})")
    if chain.verified is not None:
        v = chain.verified
        ok = chain.verifier is not None and v.signature_valid(chain.verifier.public_key)
        lines += [
            "verified-app certificate",
            f"  target service:      {v.target_service}",
            f"  verifier signature:  {'valid' if ok else 'INVALID'}",
            "verifier chain",
        ]
        if chain.verifier is not None:
            lines += ["  " + ln for ln in describe_chain(chain.verifier, authority_key)]
    return [indent + ln for ln in lines]


def cmd_cert_inspect(args) -> int:
    data = _read_bytes(args.file)
    try:
        chain = CertChain.decode(data)
    except MalformedEncoding as exc:
        raise UsageError(f"MalformedEncoding: {exc}") from exc
    key = None
    if args.authority:
        try:
            key = bytes.fromhex(args.authority)
        except ValueError as exc:
            raise UsageError("--authority must be hex") from exc
    print("\n".join(describe_chain(chain, key)))
    return EXIT_OK


def sample_chain(seed: int = 0) -> tuple[CertChain, bytes]:
    """A chain for ``AppA`` on one simulated platform, plus the IAS authority key."""
    tb = Testbed(seed)
    ctx = tb.component("AppA", tb.authlist(("AppA", "A"), ("AppB", "B")), "p0")
    return ctx.chain, tb.ias.public_key


def cmd_cert_sample(args) -> int:
    chain, key = sample_chain(args.seed)
    _write(args.out, chain.encode())
    print(f"authority key: {key.hex()}", file=sys.stderr)
    return EXIT_OK


# -- authlist -------------------------------------------------------------------


def cmd_authlist_encode(args) -> int:
    try:
        text = Path(args.file).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {args.file}: {exc.strerror}") from exc
    try:
        al = AuthList.from_text(text)
    except MalformedEncoding as exc:
        raise UsageError(f"MalformedEncoding: {exc}") from exc
    _write(args.out, al.encode())
    return EXIT_OK


def cmd_authlist_decode(args) -> int:
    data = _read_bytes(args.file)
    try:
        al = AuthList.decode(data)
    except MalformedEncoding as exc:
        raise UsageError(f"MalformedEncoding: {exc}") from exc
    print(f"# hash {al.hash.hex()}")
    print(al.to_text(), end="")
    return EXIT_OK


# -- demo -----------------------------------------------------------------------


def cmd_demo_dht(args) -> int:
    if args.nodes < 1:
        raise UsageError("--nodes must be positive")
    tb = Testbed(args.seed)
    al = tb.authlist(("DecentHT", dht.SERVICE), ("HtClient", dht.CLIENT_SERVICE))
    ring = dht.Ring()
    for i in range(args.nodes):
        ring.add(tb.component("DecentHT", al, f"node{i}"))
    rounds = ring.quiesce()
    print(f"ring of {args.nodes} nodes, stable after {rounds} rounds")
    for m in sorted(ring.members, key=lambda m: m.id):
        print(f"  {m.id:016x} {m.address}")
    client = dht.DhtClient(tb.component("HtClient", al, "client"), ring.network, ring.members[0].address, "client")
    wrong = 0
    for i in range(args.keys):
        key = b"user%d" % i
        client.put(key, b"value-%d" % i)
        if client.lookup(key).node.id != ring.oracle(key):
            wrong += 1
    bad_reads = sum(client.get(b"user%d" % i) != b"value-%d" % i for i in range(args.keys))
    hops = sorted(client.hops)
    print(f"{args.keys} puts and gets, lookup/oracle mismatches: {wrong}, bad reads: {bad_reads}")
    if hops:
        print(f"hops: mean {sum(hops) / len(hops):.2f}, max {hops[-1]}")
    print(f"ring consistent: {ring.consistent()}")
    return EXIT_OK if wrong == 0 and bad_reads == 0 and ring.consistent() else EXIT_FAIL


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="decent", description="Decent application framework simulator")
    sub = p.add_subparsers(dest="command", required=True)

    sc = sub.add_parser("scenario", help="run simulator scenarios").add_subparsers(dest="action", required=True)
    run = sc.add_parser("run", help="run a scenario file or built-in scenario")
    run.add_argument("scenario", help="YAML file or built-in name")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--until", type=float, default=None, help="simulated end time (s)")
    run.add_argument("--assert", dest="assert_", action="store_true", help="exit 1 if any check fails")
    run.add_argument("--log", action="store_true", help="print the event log")
    run.set_defaults(func=cmd_scenario_run)
    sc.add_parser("list", help="list built-in scenarios").set_defaults(func=cmd_scenario_list)

    bp = sub.add_parser("bench", help="run benchmarks").add_subparsers(dest="action", required=True)
    for name, func, helptext in (
        ("sweep", cmd_bench_sweep, "throughput over requests per session"),
        ("latency", cmd_bench_latency, "mean latency against target throughput"),
        ("nodes", cmd_bench_nodes, "latency against number of nodes"),
    ):
        b = bp.add_parser(name, help=helptext)
        b.add_argument("config", help="YAML benchmark config")
        b.add_argument("--mode", choices=[m.value for m in bench.ChannelMode], type=_mode_name)
        b.add_argument("--seed", type=int, default=None)
        b.add_argument("--out", help="CSV output file (default stdout)")
        b.set_defaults(func=func)

    cp = sub.add_parser("cert", help="certificate chains").add_subparsers(dest="action", required=True)
    ins = cp.add_parser("inspect", help="print the fields of an encoded chain")
    ins.add_argument("file")
    ins.add_argument("--authority", help="IAS authority public key (hex) to check report signatures")
    ins.set_defaults(func=cmd_cert_inspect)
    smp = cp.add_parser("sample", help="write a sample chain from a seeded testbed")
    smp.add_argument("--seed", type=int, default=0)
    smp.add_argument("--out", help="output file (default stdout)")
    smp.set_defaults(func=cmd_cert_sample)

    ap = sub.add_parser("authlist", help="AuthList encoding").add_subparsers(dest="action", required=True)
    enc = ap.add_parser("encode", help="text form to canonical binary")
    enc.add_argument("file")
    enc.add_argument("--out", help="output file (default stdout)")
    enc.set_defaults(func=cmd_authlist_encode)
    dec = ap.add_parser("decode", help="canonical binary to text form")
    dec.add_argument("file")
    dec.set_defaults(func=cmd_authlist_decode)

    dp = sub.add_parser("demo", help="demonstrations").add_subparsers(dest="action", required=True)
    dd = dp.add_parser("dht", help="build a DecentHT ring and exercise it")
    dd.add_argument("--nodes", type=int, default=6)
    dd.add_argument("--keys", type=int, default=100)
    dd.add_argument("--seed", type=int, default=0)
    dd.set_defaults(func=cmd_demo_dht)
    return p


def _mode_name(s: str) -> str:
    try:
        return bench.ChannelMode.parse(s).value
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"decent: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DecentError as exc:
        print(f"decent: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
