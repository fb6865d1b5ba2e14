"""Command-line front end.

Exit codes: 0 success, 1 measurement or validation failure, 2 usage or
configuration problems.  Machine output (CSV or JSON) goes to stdout or the
--out path; notices and failures go to stderr so they never interleave with
the schema.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from . import harness, report
from .harness import ConfigError
from .selftest import FAULTS, run_selftest
from .topology import TopologyError, format_descriptor, resolve_topology


def _err(message: str) -> None:
    print(message, file=sys.stderr)


def _parse_threads(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.split(","))
    except ValueError:
        raise ConfigError(f"bad thread list '{text}'") from None


def _cmd_topo(args) -> int:
    topo = resolve_topology(args.file, include_smt=args.smt)
    if args.json:
        doc = {
            "nodes": [
                {
                    "id": n.id,
                    "kind": n.kind.value,
                    "cpus": list(n.cpus),
                    "mem_bytes": n.mem_bytes,
                }
                for n in topo.nodes
            ]
        }
        print(json.dumps(doc, indent=2))
    else:
        sys.stdout.write(format_descriptor(topo))
    return 0


def _cmd_presets(args) -> int:
    topo = resolve_topology(args.file)
    threads = _parse_threads(args.threads) if args.threads else None
    configs, notices = harness.expand_class_presets(
        topo, args.preset, array_size=args.size, ntimes=args.ntimes, threads=threads
    )
    for notice in notices:
        _err(f"notice: {notice}")
    if configs:
        sys.stdout.write(harness.format_config(configs))
    return 0


def _cmd_run(args) -> int:
    if (args.config is None) == (args.preset is None):
        _err("run needs a config file or --preset, not both")
        return 2
    topo = resolve_topology(args.topology)
    threads = _parse_threads(args.threads) if args.threads else None
    if args.preset is not None:
        configs, notices = harness.expand_class_presets(
            topo, args.preset, array_size=args.size, ntimes=args.ntimes, threads=threads
        )
    else:
        configs = harness.load_config(args.config)
        notices = []
        overrides = {}
        if args.size is not None:
            overrides["array_size"] = args.size
        if args.ntimes is not None:
            overrides["ntimes"] = args.ntimes
        if threads is not None:
            overrides["threads"] = threads
        if overrides:
            configs = [dataclasses.replace(c, **overrides) for c in configs]
    for notice in notices:
        _err(f"notice: {notice}")

    matrix = harness.MatrixRun(configs, metadata=harness.build_metadata(topo))
    result = harness.run_matrix(
        matrix, topo, fail_fast=args.fail_fast, allow_unbound=args.allow_unbound
    )
    for notice in result.metadata.get("notices", []):
        _err(f"notice: {notice}")
    for failure in result.failures:
        where = f" (threads={failure.threads})" if failure.threads is not None else ""
        _err(f"failure: {failure.label}{where}: {failure.error}")

    text = report.emit(result.rows, fmt=args.format, metadata=result.metadata)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return 0 if result.ok else 1


def _cmd_selftest(args) -> int:
    results = run_selftest(fault=args.inject_fault)
    failed = [r for r in results if not r.ok]
    for r in results:
        status = "ok  " if r.ok else "FAIL"
        print(f"{status} {r.name:<20} {r.seconds:6.2f}s  {r.detail}")
    if failed:
        _err(f"selftest failed: {', '.join(r.name for r in failed)}")
        return 1
    return 0


def _metric_labels(rows, *labels: str) -> int | None:
    known = report.labels_in(rows)
    for label in labels:
        if label not in known:
            _err(f"label '{label}' not found in results")
            return 2
    return None


def _cmd_report(args) -> int:
    try:
        rows = report.load_results(args.infile)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        _err(f"cannot load results: {exc}")
        return 2

    if args.metric in ("degradation", "fabric", "mode"):
        if not args.baseline or not args.candidate:
            _err(f"{args.metric} needs --baseline and --candidate")
            return 2
        bad = _metric_labels(rows, args.baseline, args.candidate)
        if bad is not None:
            return bad
        kernels = [
            k for k in report.kernels_in(rows, args.baseline)
            if k in report.kernels_in(rows, args.candidate)
        ]
        if not kernels:
            _err("labels share no kernels")
            return 2
        values = []
        for kernel in kernels:
            base = report.peak_rate(rows, args.baseline, kernel)
            cand = report.peak_rate(rows, args.candidate, kernel)
            if args.metric == "degradation":
                value = report.degradation_pct(base, cand)
                print(f"{kernel}: degradation {value:.2f}% ({base:.6g} -> {cand:.6g} GB/s)")
            elif args.metric == "fabric":
                value = report.fabric_overhead(base, cand, args.generation_ratio)
                print(
                    f"{kernel}: fabric overhead {value:.6g} GB/s "
                    f"(emulated {base:.6g} x {args.generation_ratio:g}, device {cand:.6g})"
                )
            else:
                value = report.mode_overhead_pct(base, cand)
                print(f"{kernel}: mode overhead {value:.2f}% ({base:.6g} -> {cand:.6g} GB/s)")
            values.append(value)
        unit = "GB/s" if args.metric == "fabric" else "%"
        print(f"average: {sum(values) / len(values):.6g} {unit}")
        return 0

    # saturation: one label, rate-vs-threads curve per kernel
    label = args.candidate or args.baseline
    if not label:
        _err("saturation needs --candidate (or --baseline) naming one label")
        return 2
    bad = _metric_labels(rows, label)
    if bad is not None:
        return bad
    for kernel in report.kernels_in(rows, label):
        curve = report.thread_curve(rows, label, kernel)
        threads, gbps = report.saturation_point(curve, args.tolerance)
        print(f"{kernel}: saturates at {threads} threads ({gbps:.6g} GB/s)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streamer",
        description="Memory-bandwidth matrix over placement modes and nodes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("topo", help="show the detected or described topology")
    p.add_argument("--file", help="topology descriptor instead of live detection")
    p.add_argument("--smt", action="store_true", help="include hyperthread siblings")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=_cmd_topo)

    p = sub.add_parser("presets", help="print the class matrix as a config file")
    p.add_argument("--preset", default="all", choices=harness.PRESET_NAMES)
    p.add_argument("--file", help="topology descriptor instead of live detection")
    p.add_argument("--size", type=int, help="array elements per vector")
    p.add_argument("--ntimes", type=int, help="timed iterations")
    p.add_argument("--threads", help="comma-separated thread counts")
    p.set_defaults(fn=_cmd_presets)

    p = sub.add_parser("run", help="execute a config file or preset matrix")
    p.add_argument("config", nargs="?", help="run-configuration file")
    p.add_argument("--preset", choices=harness.PRESET_NAMES)
    p.add_argument("--topology", help="topology descriptor instead of live detection")
    p.add_argument("--size", type=int, help="override array elements per vector")
    p.add_argument("--ntimes", type=int, help="override timed iterations")
    p.add_argument("--threads", help="override thread counts, comma separated")
    p.add_argument("--out", help="write results here instead of stdout")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--fail-fast", action="store_true")
    p.add_argument(
        "--allow-unbound",
        action="store_true",
        help="continue unbound when node binding is unavailable",
    )
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("selftest", help="check the suite's own machinery")
    p.add_argument("--inject-fault", choices=FAULTS, help="sabotage one check")
    p.set_defaults(fn=_cmd_selftest)

    p = sub.add_parser("report", help="derived metrics from a results file")
    p.add_argument("--in", dest="infile", required=True, help="results csv or json")
    p.add_argument(
        "--metric",
        required=True,
        choices=("degradation", "fabric", "mode", "saturation"),
    )
    p.add_argument("--baseline", help="baseline label")
    p.add_argument("--candidate", help="candidate label")
    p.add_argument("--generation-ratio", type=float, default=0.5)
    p.add_argument("--tolerance", type=float, default=0.05)
    p.set_defaults(fn=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, TopologyError) as exc:
        _err(f"error: {exc}")
        return 2
    except ValueError as exc:
        _err(f"error: {exc}")
        return 2
    except OSError as exc:
        _err(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
