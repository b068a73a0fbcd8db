"""Command-line interface.

    sim run    --mode {honest|epr|naive} --beta B --n N --test-frac T
               --set-size M --trials K --seed S [--format {json|csv}] [--out PATH]
    sim verify [--beta-grid 0.1,0.2,...]
    sim oracle --beta B --set-size M

Exit codes: 0 success, 1 verification violation or I/O failure,
2 invalid arguments.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .harness import (
    DEFAULT_BETA_GRID,
    ExperimentConfig,
    analytic_accuracy,
    emit_report,
    run_experiment,
    verify_identities,
    write_report,
)
from .protocol import Mode, ProtocolParams


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sim",
        description="Monte Carlo simulator for an EPR attack on a cheat-sensitive "
        "2-1 oblivious transfer protocol.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run a seeded experiment and emit a report")
    run.add_argument("--mode", required=True, choices=[m.value for m in Mode])
    run.add_argument("--beta", required=True, type=float, help="bias parameter in (0, 1]")
    run.add_argument("--n", required=True, type=int, help="transmitted indices per session")
    run.add_argument("--test-frac", required=True, type=float, help="per-index test probability")
    run.add_argument("--set-size", required=True, type=int, help="size of each announced set")
    run.add_argument("--trials", required=True, type=int, help="number of sessions")
    run.add_argument("--seed", required=True, type=int, help="master seed")
    run.add_argument("--format", default="json", choices=["json", "csv"])
    run.add_argument("--out", default=None, help="write the report here instead of stdout")
    run.set_defaults(handler=_cmd_run)

    verify = commands.add_parser("verify", help="check the analytic identities on a beta grid")
    verify.add_argument(
        "--beta-grid",
        default=None,
        help="comma-separated beta values (default: 0.01..0.99 step 0.01)",
    )
    verify.set_defaults(handler=_cmd_verify)

    oracle = commands.add_parser("oracle", help="print the exact guess accuracy")
    oracle.add_argument("--beta", required=True, type=float)
    oracle.add_argument("--set-size", required=True, type=int)
    oracle.set_defaults(handler=_cmd_oracle)
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    params = ProtocolParams(
        beta=args.beta,
        n_states=args.n,
        test_fraction=args.test_frac,
        set_size=args.set_size,
        mode=Mode(args.mode),
        seed=args.seed,
    )
    config = ExperimentConfig(
        params=params, trials=args.trials, output_format=args.format, output_path=args.out
    )
    stats = run_experiment(config)
    text = emit_report(stats, config.output_format)
    if config.output_path is None:
        sys.stdout.write(text)
    else:
        write_report(text, config.output_path)
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    if args.beta_grid is None:
        grid = DEFAULT_BETA_GRID
    else:
        grid = tuple(float(part) for part in args.beta_grid.split(",") if part.strip())
    report = verify_identities(grid)
    for check in report.checks:
        print(
            f"beta={check.beta:.4g}  reduced-state distance {check.reduced_state_distance:.3e}  "
            f"correction deficit {check.correction_deficit:.3e}  "
            f"ordering {'ok' if check.ordering_ok else 'VIOLATED'}"
        )
    for violation in report.violations:
        print(f"VIOLATION: {violation}")
    if report.passed:
        print(f"verification PASSED for {len(report.checks)} beta values")
        return 0
    print(f"verification FAILED with {len(report.violations)} violations")
    return 1


def _cmd_oracle(args: argparse.Namespace) -> int:
    print(f"{analytic_accuracy(args.beta, args.set_size):.12g}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ValueError as exc:
        print(f"sim: invalid arguments: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"sim: i/o failure: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
