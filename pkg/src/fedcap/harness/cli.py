"""``fedcap-harness``: run bundled or custom scenarios and the latency benchmark."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .bench import MODES, BenchError, emit_report, run_latency_experiment
from .scenario import Scenario, ScenarioError, bundled, run_scenario

FORMAT_BY_SUFFIX = {".json": "json", ".csv": "csv", ".txt": "text"}


def _scenario(args: argparse.Namespace) -> int:
    try:
        scenario = Scenario.load(args.scenario)
    except (ScenarioError, OSError, json.JSONDecodeError) as exc:
        print(f"cannot load scenario: {exc}", file=sys.stderr)
        return 2
    result = run_scenario(scenario, log_level=args.log_level)
    if args.json:
        print(json.dumps({"name": result.name, "passed": result.passed, "error": result.error,
                          "steps": result.outcomes()}, indent=2))
    else:
        print(result.render())
    return 0 if result.passed else 1


def _bench(args: argparse.Namespace) -> int:
    modes = MODES if args.mode == "both" else (args.mode,)
    try:
        report = run_latency_experiment(
            args.runs, modes, requests_per_run=args.requests_per_run,
            artificial_delay_ms=args.delay_ms, log_level=args.log_level,
        )
    except (BenchError, ValueError) as exc:
        print(f"benchmark invalid: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(emit_report(report, "text"))
    if args.out:
        fmt = args.format or FORMAT_BY_SUFFIX.get(Path(args.out).suffix, "json")
        try:
            emit_report(report, fmt, args.out)
        except OSError as exc:
            print(f"cannot write report: {exc}", file=sys.stderr)
            return 1
    return 0


def _list(args: argparse.Namespace) -> int:
    for name in bundled():
        print(f"{name:<20} {Scenario.load(name).description}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedcap-harness", description=__doc__)
    parser.add_argument("--log-level", default="WARNING", help="log level for child services")
    sub = parser.add_subparsers(dest="command", required=True)

    sc = sub.add_parser("scenario", help="run a bundled scenario by name, or a scenario JSON file")
    sc.add_argument("scenario")
    sc.add_argument("--json", action="store_true", help="print step outcomes as JSON")
    sc.set_defaults(func=_scenario)

    bench = sub.add_parser("bench", help="baseline vs. pipeline latency experiment")
    bench.add_argument("--runs", type=int, default=50)
    bench.add_argument("--mode", choices=[*MODES, "both"], default="both")
    bench.add_argument("--requests-per-run", type=int, default=20)
    bench.add_argument("--delay-ms", type=float, default=0.0, help="artificial per-response delay")
    bench.add_argument("--out", help="write the report here (format from suffix unless --format)")
    bench.add_argument("--format", choices=["text", "csv", "json"])
    bench.set_defaults(func=_bench)

    ls = sub.add_parser("list", help="list bundled scenarios")
    ls.set_defaults(func=_list)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.WARNING))
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
