"""Command line entry point: ``hypokernel {analyze,simulate,full} FILE``."""

from __future__ import annotations

import argparse
import sys

from .errors import DriftNotStationary, InsufficientHits, SimulationError, TruncationTooLow
from .pipeline import EXIT_HORMANDER, EXIT_SIMULATION, EXIT_VALIDATION, MODES, run_pipeline, write_outputs
from .polyalg import ParseError
from .problem import ProblemError, load_problem


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hypokernel",
        description="Small-time heat kernel analysis of a hypoelliptic SDE at a stationary point.",
    )
    sub = parser.add_subparsers(dest="mode", required=True)
    helps = {
        "analyze": "symbolic stages only; no random sampling",
        "simulate": "analysis plus q0 estimate and the scaling-exponent fit",
        "full": "simulate plus the scaling-identity and scheme-consistency checks",
    }
    for mode in MODES:
        p = sub.add_parser(mode, help=helps[mode])
        p.add_argument("file", help="problem file (INI format)")
        p.add_argument("--seed", type=int, help="base random seed (overrides the file)")
        p.add_argument("--paths", type=int, help="Monte-Carlo paths per ensemble")
        p.add_argument("--weight-cap", type=int, help="largest bracket weight explored")
        p.add_argument("--taylor-degree", type=int, help="Taylor degree for sin/cos/exp")
        p.add_argument("--out", help="directory for report.txt, summary.json and CSV files")
        p.add_argument("--export-endpoints", action="store_true",
                       help="write the q0 ensemble endpoints to endpoints_q0.csv (needs --out)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = load_problem(args.file)
        spec = spec.with_overrides(
            seed=args.seed, paths=args.paths, weight_cap=args.weight_cap, taylor_degree=args.taylor_degree,
        )
        result = run_pipeline(spec, args.mode, export_endpoints=args.export_endpoints)
    except (ProblemError, ParseError, DriftNotStationary) as exc:
        print(f"hypokernel: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except TruncationTooLow as exc:
        print(f"hypokernel: error: {exc}", file=sys.stderr)
        return EXIT_HORMANDER
    except (SimulationError, InsufficientHits) as exc:
        print(f"hypokernel: error: {exc}", file=sys.stderr)
        return EXIT_SIMULATION

    sys.stdout.write(result.report_text)
    if args.out:
        write_outputs(result, args.out)
    elif args.export_endpoints:
        print("hypokernel: warning: --export-endpoints ignored without --out", file=sys.stderr)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
