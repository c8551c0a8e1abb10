"""Command-line entry point: probe, run, sweep, report, validate."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import kernels
from .energy import EnergyBackendUnavailable, RaplBackend
from .harness import ConfigError, SweepPlan, append_record, load_config, run_experiment, run_sweep
from .memory import MemoryTargetError, numa_nodes
from .report import (
    ReportError,
    comparison_text,
    load_records,
    render_comparison,
    render_csv,
    render_energy_chart,
    render_text_table,
    report_table,
)
from .workers import available_cpus

EXIT_OK, EXIT_FAIL, EXIT_CAPABILITY = 0, 1, 2

log = logging.getLogger("lbenergy")


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_FAIL, kind: str = "error"):
        super().__init__(message)
        self.code = code
        self.kind = kind


def _emit(args, payload: dict, text: str) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(text)


def cmd_probe(args) -> int:
    try:
        rapl = RaplBackend(args.powercap_root)
        domains = {d.value: "available" for d in rapl.domains()}
        domains.setdefault("dram", "unavailable")
        rapl_note = None
    except EnergyBackendUnavailable as exc:
        domains = {"package": "unavailable", "dram": "unavailable"}
        rapl_note = str(exc)
    payload = {
        "power_domains": domains,
        "synthetic": "available",
        "rapl_error": rapl_note,
        "numa_nodes": numa_nodes(),
        "cpus": available_cpus(),
        "kernel_backends": kernels.available_backends(),
        "active_kernel_backend": kernels.BACKEND,
    }
    lines = [f"package: {domains['package']}", f"dram: {domains['dram']}", "synthetic: available"]
    if rapl_note:
        lines.append(f"  ({rapl_note})")
    lines += [
        f"numa nodes: {', '.join(map(str, payload['numa_nodes']))}",
        f"cpus: {len(payload['cpus'])}",
        f"kernels: {kernels.BACKEND} (available: {', '.join(payload['kernel_backends'])})",
    ]
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK


def _load(args):
    try:
        return load_config(args.config)
    except OSError as exc:
        raise CliError(f"cannot read config: {exc}") from None
    except (ConfigError, ValueError, TypeError) as exc:
        raise CliError(f"invalid config: {exc}", kind="config") from None


def cmd_run(args) -> int:
    cfg, _ = _load(args)
    try:
        rec = run_experiment(cfg)
    except EnergyBackendUnavailable as exc:
        raise CliError(str(exc), EXIT_CAPABILITY, "capability") from None
    except MemoryTargetError as exc:
        raise CliError(str(exc), EXIT_CAPABILITY, "capability") from None
    except (ConfigError, ValueError) as exc:
        raise CliError(f"invalid config: {exc}", kind="config") from None
    if args.out:
        append_record(args.out, rec)
    _emit(args, rec, render_text_table([rec]))
    return EXIT_OK


def cmd_sweep(args) -> int:
    base, plan = _load(args)
    if plan is None:
        plan = SweepPlan(base, layouts=[base.layout], threads=[base.threads], memory_targets=[base.memory_target])
    try:
        records = run_sweep(plan, args.out)
    except ConfigError as exc:
        raise CliError(str(exc), kind="config") from None
    bad = [r for r in records if r["status"] != "ok"]
    summary = {"records": len(records), "ok": len(records) - len(bad),
               "skipped": sum(r["status"] == "skipped" for r in records),
               "errors": sum(r["status"] == "error" for r in records)}
    text = render_text_table(records)
    for r in bad:
        text += f"\n{r['status']}: {r['point']}: {r['reason']}"
    _emit(args, {"summary": summary, "records": records}, text)
    return EXIT_FAIL if summary["errors"] else EXIT_OK


def cmd_report(args) -> int:
    sets: dict[str, list] = {}
    try:
        for path in args.inputs:
            name = Path(path).stem
            sets[path if name in sets else name] = load_records(path)
    except OSError as exc:
        raise CliError(f"cannot read records: {exc}") from None
    except ReportError as exc:
        raise CliError(str(exc), kind="parse") from None
    first = next(iter(sets.values()))
    try:
        if args.csv:
            Path(args.csv).write_text(render_csv(first), newline="")
        if args.svg:
            Path(args.svg).write_text(render_energy_chart(first, args.kernel))
        text = render_text_table(first)
        payload = {"rows": len(report_table(first))}
        if len(sets) > 1:
            rows = render_comparison(sets)
            text += "\n\n" + comparison_text(rows)
            payload["comparison"] = [r.__dict__ for r in rows]
    except ReportError as exc:
        raise CliError(str(exc), kind="report") from None
    _emit(args, payload, text)
    return EXIT_OK


def cmd_validate(args) -> int:
    from . import validation

    results = validation.run_all(args.suite or None)
    passed = all(r.passed for r in results)
    if args.json:
        print(json.dumps({"passed": passed, "suites": [
            {"name": r.name, "passed": r.passed, "seconds": r.seconds, "details": r.details} for r in results
        ]}, indent=2))
    else:
        for r in results:
            print(r.line())
            if not r.passed or args.verbose:
                for d in r.details:
                    print(f"    {d}")
        print("all suites passed" if passed else "FAILED")
    return EXIT_OK if passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lbenergy", description="Lattice Boltzmann energy-to-solution benchmark")
    p.add_argument("--debug", action="store_true", help="verbose logging")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("probe", help="list power domains, NUMA nodes and kernel backends")
    sp.add_argument("--json", action="store_true")
    sp.add_argument("--powercap-root", default="/sys/class/powercap")
    sp.set_defaults(func=cmd_probe)

    sp = sub.add_parser("run", help="run one experiment from a config file")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", help="append the record to this JSON Lines file")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="run the [sweep] product of a config file")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", help="JSON Lines file, appended as each point finishes")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("report", help="render tables, CSV and SVG from record files")
    sp.add_argument("--in", dest="inputs", action="append", required=True,
                    help="records (JSON Lines); repeat to compare sets side by side")
    sp.add_argument("--csv")
    sp.add_argument("--svg")
    sp.add_argument("--kernel", choices=("propagate", "collide"), default="propagate")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("validate", help="run the correctness suites")
    sp.add_argument("--suite", action="append", choices=("1", "2", "3", "4", "5", "7"))
    sp.add_argument("--json", action="store_true")
    sp.add_argument("-v", "--verbose", action="store_true")
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.debug else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        if getattr(args, "json", False):
            print(json.dumps({"error": str(exc), "kind": exc.kind, "exit_code": exc.code}), file=sys.stderr)
        else:
            print(f"lbenergy: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
