#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy twins.

Covers the three hot paths: Hermite evaluation over large sample arrays,
the Gray-code exhaustive spike search, and one SGD training epoch.  The
numba twins are warmed up once before timing so compilation cost is not
mixed into the steady-state numbers.

Run:  python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import time

import numpy as np

from cumlab import _kernels
from cumlab.hermite import GDistribution


def best_of(fn, repeats=3):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def row(name, t_numpy, t_numba):
    speedup = t_numpy / t_numba if t_numba > 0 else float("inf")
    print(f"{name:<44} {t_numpy * 1e3:>10.2f} {t_numba * 1e3:>10.2f} {speedup:>9.1f}x")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = parser.parse_args()

    if not _kernels.NUMBA_AVAILABLE:
        raise SystemExit("numba is not importable; nothing to compare")

    rng = np.random.default_rng(0)
    print(f"{'kernel':<44} {'numpy ms':>10} {'numba ms':>10} {'speedup':>10}")

    # Hermite evaluation
    n_samples = 2_000_000 if not args.quick else 200_000
    x = rng.standard_normal(n_samples)
    m = 8
    _kernels.hermite_eval_numba(m, x[:16])  # warm-up compile
    row(
        f"hermite_eval m={m} on {n_samples:.0e} points",
        best_of(lambda: _kernels.hermite_eval_numpy(m, x)),
        best_of(lambda: _kernels.hermite_eval_numba(m, x)),
    )

    # exhaustive search
    d = 18 if not args.quick else 14
    n = 200
    X = rng.standard_normal((n, d))
    beta = 10.0
    scale = np.sqrt(beta / ((1 + beta) * d))
    nodes, weights = GDistribution.rademacher().quadrature()
    logw = np.log(weights)
    _kernels.search_best_code_numba(X[:4, :6], scale, beta, nodes, logw)  # warm-up
    res_np = _kernels.search_best_code_numpy(X, scale, beta, nodes, logw)
    res_nb = _kernels.search_best_code_numba(X, scale, beta, nodes, logw)
    assert res_np[0] == res_nb[0], "backends disagree"
    row(
        f"exhaustive search d={d} n={n} (2^{d - 1} cands)",
        best_of(lambda: _kernels.search_best_code_numpy(X, scale, beta, nodes, logw), 1),
        best_of(lambda: _kernels.search_best_code_numba(X, scale, beta, nodes, logw), 1),
    )

    # SGD epoch
    n, d, m_hidden, bs = (4096, 32, 160, 16) if not args.quick else (512, 16, 80, 16)
    X = rng.standard_normal((n, d))
    y = np.sign(rng.standard_normal(n))
    order = rng.permutation(n)
    W0 = rng.standard_normal((m_hidden, d)) / np.sqrt(d)
    v0 = rng.standard_normal(m_hidden) / np.sqrt(m_hidden)

    def run_epoch(fn):
        W, b, v = W0.copy(), np.zeros(m_hidden), v0.copy()
        fn(W, b, v, 0.0, X, y, order, bs, 0.002, 0.002)

    run_epoch(_kernels.sgd_epoch_numba)  # warm-up
    row(
        f"sgd epoch n={n} d={d} m={m_hidden} bs={bs}",
        best_of(lambda: run_epoch(_kernels.sgd_epoch_numpy)),
        best_of(lambda: run_epoch(_kernels.sgd_epoch_numba)),
    )


if __name__ == "__main__":
    main()
