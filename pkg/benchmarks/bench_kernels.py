#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--points 262144] [--repeat 5]

Times the pointwise kernels on synthetic positive-metric data for n = 1, 2
and prints one table row per kernel with the speedup of the compiled path.
The two backends are parity-tested in tests/test_kernels.py; this script
only measures.
"""
import argparse
import time

import numpy as np

from krflow import _kernels_py

try:
    from krflow import _kernels_cy
except ImportError:
    _kernels_cy = None


def make_inputs(points, n, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((points, n, n)) + 1j * rng.standard_normal((points, n, n))
    g = (np.einsum("pij,pkj->pik", a, a.conj()) / n + 0.3 * np.eye(n)).astype(
        np.complex128)
    h = 0.1 * (g - np.eye(n))
    v = (rng.standard_normal((points, n))
         + 1j * rng.standard_normal((points, n))).astype(np.complex128)
    t = (rng.standard_normal((points, n, n, n))
         + 1j * rng.standard_normal((points, n, n, n))).astype(np.complex128)
    ginv = _kernels_py.inv_herm(g)
    return {
        "det_herm": (g,),
        "det_sum_ratio": (g, h),
        "inv_herm": (g,),
        "trace_pair": (g, h),
        "quad_form": (g, v),
        "third_contract": (ginv, t),
        "eig_range_herm": (g,),
    }


def best_of(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--points", type=int, default=262144)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    if _kernels_cy is None:
        print("compiled backend not available; showing numpy timings only")

    for n in (1, 2):
        inputs = make_inputs(args.points, n)
        print(f"\nn = {n}, {args.points} points (best of {args.repeat})")
        header = f"{'kernel':<16} {'numpy [ms]':>12}"
        if _kernels_cy is not None:
            header += f" {'cython [ms]':>12} {'speedup':>9}"
        print(header)
        for name, call_args in inputs.items():
            t_py = best_of(getattr(_kernels_py, name), call_args, args.repeat)
            line = f"{name:<16} {1e3 * t_py:>12.2f}"
            if _kernels_cy is not None:
                t_cy = best_of(getattr(_kernels_cy, name), call_args, args.repeat)
                line += f" {1e3 * t_cy:>12.2f} {t_py / t_cy:>8.1f}x"
            print(line)


if __name__ == "__main__":
    main()
