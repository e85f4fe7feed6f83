"""Minimal-neighbourhood kernel: numba loop vs numpy matrix product.

    python3 benchmarks/bench_kernels.py [--reps 20] [--sizes 16,64,256,1024]
"""

import argparse
import time

import numpy as np

from etale_lab import _kernels


def best_of(fn, arg, reps):
    best = float("inf")
    for _ in range(reps):
        t = time.perf_counter()
        fn(arg)
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--sizes", default="16,64,256,1024")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    jit = _kernels._numba_kernel()
    print(f"{'points':>7} {'gens':>6} {'numba ms':>10} {'numpy ms':>10} {'ratio':>7}")
    for n in map(int, args.sizes.split(",")):
        k = 2 * n
        sub = rng.random((k, n)) < 0.3
        a, b = jit(sub), _kernels._neighborhoods_numpy(sub)
        if not np.array_equal(a, b):
            raise SystemExit(f"kernels disagree at n={n}")
        tj = best_of(jit, sub, args.reps)
        tn = best_of(_kernels._neighborhoods_numpy, sub, args.reps)
        print(f"{n:7d} {k:6d} {tj * 1e3:10.3f} {tn * 1e3:10.3f} {tn / tj:7.2f}")


if __name__ == "__main__":
    main()
