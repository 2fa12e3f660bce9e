"""Compiled versus pure-Python simulation kernel.

Runs both kernels on the same machine-replacement and maze policies, checks
that they produce bit-identical returns and step counts, and prints the
runs per second of each.

    python benchmarks/bench_kernels.py --runs 20000
"""
import argparse
import time

import numpy as np

from drmdp.bench.machine import MachineReplacementConfig, generate_machine_problem
from drmdp.bench.maze import MazeConfig, generate_maze_problem
from drmdp.bench.simulate import simulate
from drmdp.dp import value_iteration
from drmdp.kernels import get_kernel


def _case(name, inst, runs, seed, repeats):
    sol = value_iteration(inst.problem, eps=1e-6, fast_point=True, check=False)
    out = {}
    for kernel in ("python", "compiled"):
        best = np.inf
        for _ in range(repeats):
            t0 = time.perf_counter()
            rep = simulate(inst.truth, sol.policy, runs, seed, kernel=kernel)
            best = min(best, time.perf_counter() - t0)
        out[kernel] = (best, rep)
    (tp, rp), (tc, rc) = out["python"], out["compiled"]
    same = np.array_equal(rp.returns, rc.returns) and np.array_equal(rp.steps, rc.steps)
    print(f"{name:10s} runs={runs:6d}  python {runs / tp:10.0f} runs/s  compiled {runs / tc:10.0f} runs/s  "
          f"speedup {tp / tc:6.1f}x  identical={same}")
    return same


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--runs", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    get_kernel("compiled")  # fail early when the extension is missing
    ok = _case("machine", generate_machine_problem(MachineReplacementConfig(variant="nominal")),
               args.runs, args.seed, args.repeats)
    ok &= _case("maze", generate_maze_problem(MazeConfig(variant="dr_nested")), args.runs // 10, args.seed,
                args.repeats)
    raise SystemExit(0 if ok else 1)


if __name__ == "__main__":
    main()
