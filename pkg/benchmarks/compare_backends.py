#!/usr/bin/env python3
"""Time the numba-jitted kernels against the pure-numpy fallback.

Runs each kernel on identical inputs and reports median wall time per
call plus the speedup of numba over numpy. Jitted kernels are warmed up
first so compilation is excluded.

Usage:
    python3 benchmarks/compare_backends.py [--rows N] [--dim D] [--repeats R]
"""

import argparse
import statistics
import time

import numpy as np

from ctlkit.backend import make_kernels


def time_call(fn, args, repeats):
    fn(*args)  # warm-up (triggers jit compilation on the numba path)
    samples = []
    for _ in range(repeats):
        t0 = time.monotonic()
        fn(*args)
        samples.append(time.monotonic() - t0)
    return statistics.median(samples)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=4000)
    ap.add_argument("--dim", type=int, default=128)
    ap.add_argument("--repeats", type=int, default=7)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    mat = rng.standard_normal((args.rows, args.dim)).astype(np.float32)
    small = mat[:256]
    q = rng.standard_normal(args.dim).astype(np.float32)
    a = mat[0].copy()
    b = mat[1].copy()

    cases = [
        ("dot64", lambda k: (k.dot64, (a, b))),
        ("sqdist64", lambda k: (k.sqdist64, (a, b))),
        ("sum_rows", lambda k: (k.sum_rows, (mat,))),
        ("matvec_scores", lambda k: (k.matvec_scores, (mat, q))),
        ("pairwise_sqdist", lambda k: (k.pairwise_sqdist, (small,))),
    ]

    try:
        numba_k = make_kernels("numba")
    except ImportError:
        print("numba not installed; nothing to compare")
        return 1
    numpy_k = make_kernels("numpy")

    print(f"rows={args.rows} dim={args.dim} repeats={args.repeats}")
    print(f"{'kernel':<16} {'numba (s)':>12} {'numpy (s)':>12} {'speedup':>8}")
    for name, pick in cases:
        fn_nb, args_nb = pick(numba_k)
        fn_np, args_np = pick(numpy_k)
        t_nb = time_call(fn_nb, args_nb, args.repeats)
        t_np = time_call(fn_np, args_np, args.repeats)
        speed = t_np / t_nb if t_nb > 0 else float("inf")
        print(f"{name:<16} {t_nb:>12.3e} {t_np:>12.3e} {speed:>7.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
