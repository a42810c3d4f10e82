#!/usr/bin/env python3
"""Benchmark the compiled routing kernel against the pure-Python fallback.

Times nearest-neighbor + 2-opt over seeded instances at several sizes and
checks both backends return identical tours.

Usage: python3 scripts/bench_routing.py [--sizes 8,16,32,64] [--reps 50]
"""

import argparse
import time

import numpy as np

from skydrop import routing, routing_py
from skydrop.rng import SplitMix64


def instance(seed: int, n: int) -> np.ndarray:
    rng = SplitMix64(seed)
    pts = np.array([[rng.uniform(-2000.0, 2000.0), rng.uniform(-2000.0, 2000.0)]
                    for _ in range(n)])
    diff = pts[:, None, :] - pts[None, :, :]
    return np.ascontiguousarray(np.hypot(diff[..., 0], diff[..., 1]))


def solve(backend, dmat):
    return backend.two_opt(dmat, backend.nn_order(dmat))


def bench(backend, mats) -> float:
    start = time.perf_counter()
    for dmat in mats:
        solve(backend, dmat)
    return time.perf_counter() - start


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="8,16,32,64")
    parser.add_argument("--reps", type=int, default=50)
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    print(f"routing backend in use: {routing.BACKEND}")
    print(f"{'n':>4} {'reps':>5} {'compiled':>12} {'python':>12} {'speedup':>8}")
    for n in sizes:
        mats = [instance(seed, n) for seed in range(args.reps)]
        for dmat in mats[:5]:  # spot-check agreement before timing
            assert list(solve(routing, dmat)) == list(solve(routing_py, dmat))
        t_compiled = bench(routing, mats)
        t_python = bench(routing_py, mats)
        print(f"{n:>4} {args.reps:>5} {t_compiled:>11.4f}s {t_python:>11.4f}s "
              f"{t_python / t_compiled:>7.1f}x")


if __name__ == "__main__":
    main()
