#!/usr/bin/env python3
"""Benchmark: compiled session kernels vs the pure-Python fallback lane.

The lane is fixed at import time by QOTSIM_DISABLE_NUMBA, so the same
workload runs in two subprocesses (one per lane) and the parent prints a
comparison. Reports from both lanes are also checked for byte equality:
the fallback consumes the identical uniform stream.

Usage:
    python benchmarks/bench_sessions.py [--trials 300] [--n 200]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

MODES = ("honest", "epr", "naive")


def run_workload(trials: int, n: int) -> dict:
    from qotsim import ExperimentConfig, Mode, ProtocolParams, emit_report, run_experiment
    from qotsim._kernels import NUMBA_ENABLED

    def config(mode):
        params = ProtocolParams(
            beta=0.5, n_states=n, test_fraction=0.25, set_size=10, mode=Mode(mode), seed=1234
        )
        return ExperimentConfig(params, trials)

    # warm up imports, tables, and (when enabled) the jit cache
    run_experiment(ExperimentConfig(config("epr").params, 2))

    out = {"numba": NUMBA_ENABLED, "timings": {}, "reports": {}}
    for mode in MODES:
        start = time.perf_counter()
        stats = run_experiment(config(mode))
        out["timings"][mode] = time.perf_counter() - start
        out["reports"][mode] = emit_report(stats, "json")
    return out


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=300)
    parser.add_argument("--n", type=int, default=200)
    parser.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.worker:
        json.dump(run_workload(args.trials, args.n), sys.stdout)
        return 0

    results = {}
    for label, disable in (("kernels", ""), ("fallback", "1")):
        env = dict(os.environ, QOTSIM_DISABLE_NUMBA=disable)
        proc = subprocess.run(
            [sys.executable, __file__, "--worker", "--trials", str(args.trials), "--n", str(args.n)],
            capture_output=True, text=True, env=env,
        )
        if proc.returncode != 0:
            print(proc.stderr, file=sys.stderr)
            return 1
        results[label] = json.loads(proc.stdout)

    if results["kernels"]["numba"] == results["fallback"]["numba"]:
        print("warning: numba unavailable, both lanes ran the fallback", file=sys.stderr)

    sessions = args.trials
    print(f"workload: {args.trials} sessions x {args.n} indices per mode\n")
    print(f"{'mode':<8} {'kernels':>12} {'fallback':>12} {'speedup':>9}   identical reports")
    for mode in MODES:
        fast = results["kernels"]["timings"][mode]
        slow = results["fallback"]["timings"][mode]
        same = results["kernels"]["reports"][mode] == results["fallback"]["reports"][mode]
        print(
            f"{mode:<8} {1e3 * fast / sessions:>9.3f} ms {1e3 * slow / sessions:>9.3f} ms "
            f"{slow / fast:>8.1f}x   {'yes' if same else 'NO'}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
