#!/usr/bin/env python3
"""Benchmark the numba-compiled hot kernels against the pure-numpy variants.

Usage:
    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --repeats 200 --kv-rows 64 256 1024
"""

import argparse
import time

import numpy as np

from streammem.kernels import (NUMBA_AVAILABLE, attention_core_numba,
                               attention_core_numpy, sq_dist_matrix_numba,
                               sq_dist_matrix_numpy)


def _time(fn, args, repeats):
    fn(*args)  # warm up (triggers JIT compilation for the numba variants)
    start = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - start) / repeats


def bench_attention(kv_rows, repeats, d=64, heads=4, n_q=32):
    rng = np.random.default_rng(0)
    print(f"\nattention core (n_q={n_q}, d={d}, heads={heads})")
    print(f"{'kv_rows':>8} {'numpy':>12} {'numba':>12} {'speedup':>8}")
    for n_kv in kv_rows:
        qp = rng.standard_normal((n_q, d))
        kp = rng.standard_normal((n_kv, d))
        vp = rng.standard_normal((n_kv, d))
        t_np = _time(attention_core_numpy, (qp, kp, vp, heads), repeats)
        row = f"{n_kv:>8} {t_np * 1e6:>10.1f}us"
        if NUMBA_AVAILABLE:
            t_nb = _time(attention_core_numba, (qp, kp, vp, heads), repeats)
            out_np = attention_core_numpy(qp, kp, vp, heads)
            out_nb = attention_core_numba(qp, kp, vp, heads)
            assert np.allclose(out_np, out_nb, atol=1e-12)
            row += f" {t_nb * 1e6:>10.1f}us {t_np / t_nb:>7.2f}x"
        print(row)


def bench_sq_dists(sizes, repeats, d=16):
    rng = np.random.default_rng(0)
    print(f"\npairwise squared distances (d={d})")
    print(f"{'n':>8} {'numpy':>12} {'numba':>12} {'speedup':>8}")
    for n in sizes:
        z = rng.standard_normal((n, d))
        t_np = _time(sq_dist_matrix_numpy, (z,), repeats)
        row = f"{n:>8} {t_np * 1e6:>10.1f}us"
        if NUMBA_AVAILABLE:
            t_nb = _time(sq_dist_matrix_numba, (z,), repeats)
            assert np.allclose(sq_dist_matrix_numpy(z),
                               sq_dist_matrix_numba(z), atol=1e-12)
            row += f" {t_nb * 1e6:>10.1f}us {t_np / t_nb:>7.2f}x"
        print(row)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=100)
    parser.add_argument("--kv-rows", type=int, nargs="+",
                        default=[16, 64, 256, 1024])
    parser.add_argument("--cluster-sizes", type=int, nargs="+",
                        default=[16, 64, 256])
    args = parser.parse_args()
    if not NUMBA_AVAILABLE:
        print("numba not importable; timing the numpy variants only")
    bench_attention(args.kv_rows, args.repeats)
    bench_sq_dists(args.cluster_sizes, args.repeats)


if __name__ == "__main__":
    main()
