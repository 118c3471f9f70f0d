"""Compare the compiled simplex pivot kernel against the pure-numpy fallback.

Runs the same LP workload twice in subprocesses, once with the default
(compiled) kernel and once with POPALLOC_NO_NUMBA=1, and prints timings plus
a check that both paths return identical objective values.

Usage: python benchmarks/bench_solver.py [--size 120] [--repeat 5]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

_WORKER = r"""
import json, os, sys, time
import numpy as np
from popalloc.solver import LE, LinearProgramForm, solve_lp
from popalloc._accel import NUMBA_ENABLED

size, repeat = int(sys.argv[1]), int(sys.argv[2])
rng = np.random.default_rng(0)
lps = []
for _ in range(repeat):
    m, n = size, size + size // 2
    lps.append(LinearProgramForm(
        objective=rng.uniform(0.0, 1.0, n),
        row_coeffs=rng.uniform(0.0, 1.0, (m, n)),
        row_relations=[LE] * m,
        row_rhs=rng.uniform(n / 4, n / 2, m),
        lower=np.zeros(n),
        upper=np.full(n, np.inf),
    ))

solve_lp(lps[0])  # warm-up triggers any compilation outside the timed region
start = time.perf_counter()
objectives = [solve_lp(lp).objective_value for lp in lps]
elapsed = time.perf_counter() - start
print(json.dumps({"numba": NUMBA_ENABLED, "seconds": elapsed, "objectives": objectives}))
"""


def run(size: int, repeat: int, disable_numba: bool) -> dict:
    env = dict(os.environ)
    if disable_numba:
        env["POPALLOC_NO_NUMBA"] = "1"
    else:
        env.pop("POPALLOC_NO_NUMBA", None)
    out = subprocess.run(
        [sys.executable, "-c", _WORKER, str(size), str(repeat)],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    return json.loads(out.stdout.strip().splitlines()[-1])


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=120, help="constraint rows per LP")
    parser.add_argument("--repeat", type=int, default=5, help="LPs per run")
    args = parser.parse_args()

    compiled = run(args.size, args.repeat, disable_numba=False)
    fallback = run(args.size, args.repeat, disable_numba=True)

    label = "compiled" if compiled["numba"] else "compiled (numba unavailable: fallback)"
    print(f"{label:>40}: {compiled['seconds']:.3f}s for {args.repeat} LPs of {args.size} rows")
    print(f"{'pure-numpy fallback':>40}: {fallback['seconds']:.3f}s")
    if fallback["seconds"] > 0 and compiled["numba"]:
        print(f"{'speedup':>40}: {fallback['seconds'] / compiled['seconds']:.2f}x")

    if compiled["objectives"] != fallback["objectives"]:
        print("MISMATCH: kernels disagree on objective values", file=sys.stderr)
        return 1
    print(f"{'objective agreement':>40}: identical across {args.repeat} LPs")
    return 0


if __name__ == "__main__":
    sys.exit(main())
