#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Runs the hot kernels (multilinear sampling, vector sampling for map
composition, nearest-neighbor label sampling, Jacobian determinant,
scatter adjoint) on both backends and prints a timing table plus the
max absolute disagreement.

Usage: python benchmarks/bench_backends.py [--size 96] [--dim 3] [--repeat 5]
"""

import argparse
import time

import numpy as np

from vpreg._kernels import numba_kernels, numpy_kernels


def time_call(fn, args, repeat):
    fn(*args)  # warm-up (numba compiles here)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--size", type=int, default=96)
    parser.add_argument("--dim", type=int, default=3, choices=[2, 3])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    n, d = args.size, args.dim
    dims = (n,) * d
    rng = np.random.default_rng(0)
    img = rng.standard_normal(dims)
    labels = rng.integers(0, 20, size=dims).astype(np.int32)
    coords = np.stack(np.meshgrid(*[np.arange(n, dtype=float)] * d, indexing="ij"))
    coords = coords + rng.uniform(-2.0, 2.0, size=coords.shape)
    coords = coords.clip(0, n - 1)
    vec = rng.standard_normal((d,) + dims)

    if d == 2:
        cases = [
            ("interp_scalar_2d", (img, coords[0], coords[1])),
            ("interp_vector_2d", (vec, coords[0], coords[1])),
            ("interp_nearest_2d", (labels, coords[0], coords[1])),
            ("jac_det_2d", (coords[0], coords[1])),
            ("scatter_vector_2d", (vec, coords[0], coords[1])),
        ]
    else:
        cases = [
            ("interp_scalar_3d", (img, coords[0], coords[1], coords[2])),
            ("interp_vector_3d", (vec, coords[0], coords[1], coords[2])),
            ("interp_nearest_3d", (labels, coords[0], coords[1], coords[2])),
            ("jac_det_3d", (coords[0], coords[1], coords[2])),
            ("scatter_vector_3d", (vec, coords[0], coords[1], coords[2])),
        ]

    print(f"size {n}^{d}, best of {args.repeat}")
    print(f"{'kernel':<20} {'numpy':>10} {'numba':>10} {'speedup':>8} {'max |diff|':>11}")
    for name, call_args in cases:
        t_np, out_np = time_call(getattr(numpy_kernels, name), call_args, args.repeat)
        t_nb, out_nb = time_call(getattr(numba_kernels, name), call_args, args.repeat)
        diff = float(np.max(np.abs(np.asarray(out_np, float) - np.asarray(out_nb, float))))
        print(f"{name:<20} {t_np*1e3:>8.2f}ms {t_nb*1e3:>8.2f}ms {t_np/t_nb:>7.1f}x {diff:>11.2e}")


if __name__ == "__main__":
    main()
