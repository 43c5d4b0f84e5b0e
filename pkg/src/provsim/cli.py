"""Command-line front-end.

    provsim run      --config FILE [--seed N] --out FILE [--trace-out FILE]
    provsim sweep    --config FILE --plan 1:0,2:0,... --out FILE
    provsim validate [--suite NAME] [--full]
    provsim report   --trace FILE [--csv FILE]

Exit codes: 0 success, 1 validation or application failure, 2 config error.
"""

import argparse
import sys

from . import checks
from .config import ParseError, ValidationError, parse_config
from .experiment import (AppFailed, NonTermination, parse_plan, results_to_csv,
                         run_experiment, sweep)
from .kernel import fmt_quantity, parse_trace
from .telemetry import report as build_report

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def _cmd_run(args) -> int:
    config = parse_config(args.config)
    result = run_experiment(config, seed=args.seed, raise_on_failure=False)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write(results_to_csv([result], with_hash=True))
    if args.trace_out:
        with open(args.trace_out, "w", encoding="utf-8", newline="") as fh:
            fh.write(result.kernel.export_trace())
    if result.status != "ok":
        print(f"run failed: application did not complete ({result.status})")
        return EXIT_FAILURE
    print(f"tasks={result.tasks} workers={result.total_workers} "
          f"makespan_s={fmt_quantity(result.makespan_s)} "
          f"cost={fmt_quantity(result.cost)} trace={result.trace_hash[:16]}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config = parse_config(args.config)
    plan = parse_plan(args.plan)
    results = sweep(config, plan, seed=args.seed)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write(results_to_csv(results))
    for r in results:
        print(r.csv_row())
    return EXIT_OK


def _cmd_validate(args) -> int:
    names = [args.suite] if args.suite else None
    results = checks.run_suites(names, quick=not args.full)
    failed_total = 0
    for res in results:
        status = "PASS" if res.ok() else "FAIL"
        print(f"{status} {res.name}: {res.passed} passed, {res.failed} failed")
        for failure in res.failures[:10]:
            print(f"  - {failure}")
        failed_total += res.failed
    return EXIT_OK if failed_total == 0 else EXIT_FAILURE


def _cmd_report(args) -> int:
    with open(args.trace, encoding="utf-8") as fh:
        trace = parse_trace(fh.read())
    rep = build_report(trace)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            fh.write(rep.to_csv())
    print(rep.to_text(), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="provsim",
        description="Deterministic multi-cloud provisioning and bag-of-tasks simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--trace-out", default=None)
    p_run.set_defaults(fn=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a static worker-count sweep")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--plan", required=True,
                         help="comma-separated azure:ec2 counts, e.g. 1:0,2:0,3:3")
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--out", required=True)
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_val = sub.add_parser("validate", help="run the invariant suites")
    p_val.add_argument("--suite", choices=sorted(checks.SUITES), default=None)
    p_val.add_argument("--full", action="store_true",
                       help="full-size suites instead of the quick sizes")
    p_val.set_defaults(fn=_cmd_validate)

    p_rep = sub.add_parser("report", help="summarize an exported trace")
    p_rep.add_argument("--trace", required=True)
    p_rep.add_argument("--csv", default=None)
    p_rep.set_defaults(fn=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ParseError, ValidationError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AppFailed, NonTermination) as exc:
        print(f"run error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
