"""Time the numba and numpy variants of every kernel on representative inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5]

The numba column excludes compilation (one warm-up call per kernel).
"""
import argparse
import time

import numpy as np

from initiative import kernels
from initiative.synthetic import run_length_cdf


def inputs(rng):
    grid = np.linspace(0.0, 0.5, 51)
    n = rng.integers(1, 400, size=20000)
    k = rng.binomial(n, 0.3)
    logk = kernels.log_binomial_matrix_np(k, n, grid, False, 100)
    kt = np.exp(logk - logk.max(axis=1, keepdims=True))
    w = np.ones(kt.shape[0])
    f0 = np.full(grid.size, 1.0 / grid.size)
    actors = rng.integers(0, 2, size=2_000_000).astype(np.int8)
    offsets = np.arange(0, actors.size + 1, 200, dtype=np.int64)
    S, L = 2000, 500
    uniforms = rng.random((S, L))
    first = rng.integers(0, 2, size=S).astype(np.int8)
    cdf = run_length_cdf(0.51, 0.92, L)
    ids = rng.integers(0, 50, size=1_000_000)
    return {
        "log_binomial_matrix": (k, n, grid, False, 100),
        "em_fit": (kt, w, f0, 1e-12, 300, 10**9),
        "run_lengths": (actors, offsets),
        "turn_counts": (actors, offsets),
        "feedback_actors": (uniforms, first, cdf, L),
        "window_distinct": (ids, 20, 1),
    }


def best_of(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cases = inputs(np.random.default_rng(args.seed))
    print(f"{'kernel':<22}{'numba s':>12}{'numpy s':>12}{'speedup':>10}")
    for name, (nb, np_) in kernels.PAIRS.items():
        call_args = cases[name]
        nb(*call_args)
        t_nb = best_of(nb, call_args, args.repeat)
        t_np = best_of(np_, call_args, args.repeat)
        print(f"{name:<22}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
