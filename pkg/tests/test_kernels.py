"""Numba and numpy kernel twins compute the same thing."""

import subprocess
import sys

import numpy as np
import pytest

from cumlab import _kernels
from cumlab.hermite import GDistribution


def test_backend_selection():
    assert _kernels.backend() in ("numba", "numpy")
    old = _kernels.backend()
    try:
        assert _kernels.set_backend("numpy") == "numpy"
        assert _kernels.backend() == "numpy"
    finally:
        _kernels.set_backend(old)
    with pytest.raises(ValueError):
        _kernels.set_backend("cuda")


def test_env_var_selects_backend():
    code = (
        "from cumlab import _kernels; print(_kernels.backend())"
    )
    out = subprocess.run(
        [sys.executable, "-c", code],
        capture_output=True,
        text=True,
        env={"PATH": "/usr/bin:/bin", "CUMLAB_BACKEND": "numpy"},
    )
    assert out.stdout.strip() == "numpy"


def test_hermite_twins_agree():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(1000)
    for m in (0, 1, 5, 12):
        a = _kernels.hermite_eval_numpy(m, x)
        b = _kernels.hermite_eval_numba(m, x)
        np.testing.assert_allclose(a, b, rtol=1e-13)


def test_search_twins_agree():
    rng = np.random.default_rng(1)
    for dist in (GDistribution.rademacher(), GDistribution.uniform()):
        nodes, weights = dist.quadrature()
        logw = np.log(weights)
        for d in (3, 8, 11):
            for n in (5, 40):
                X = rng.standard_normal((n, d))
                beta = float(rng.uniform(0.5, 20.0))
                scale = np.sqrt(beta / ((1 + beta) * d))
                code_nb, score_nb = _kernels.search_best_code_numba(X, scale, beta, nodes, logw)
                code_np, score_np = _kernels.search_best_code_numpy(X, scale, beta, nodes, logw)
                assert code_nb == code_np
                assert score_nb == pytest.approx(score_np, rel=1e-10)


def test_search_numpy_blocking_invariance():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((20, 9))
    nodes, weights = GDistribution.rademacher().quadrature()
    args = (X, 0.3, 10.0, nodes, np.log(weights))
    full = _kernels.search_best_code_numpy(*args, block=1 << 20)
    small = _kernels.search_best_code_numpy(*args, block=7)
    assert full[0] == small[0]
    assert full[1] == pytest.approx(small[1], rel=1e-12)


def test_sgd_twins_agree():
    rng = np.random.default_rng(3)
    n, d, m, bs = 64, 6, 10, 8
    X = rng.standard_normal((n, d))
    y = np.sign(rng.standard_normal(n))
    order = rng.permutation(n)
    init_W = rng.standard_normal((m, d)) / np.sqrt(d)
    init_b = np.zeros(m)
    init_v = rng.standard_normal(m) / np.sqrt(m)

    states = {}
    for name, fn in (("numpy", _kernels.sgd_epoch_numpy), ("numba", _kernels.sgd_epoch_numba)):
        W, b, v = init_W.copy(), init_b.copy(), init_v.copy()
        c = fn(W, b, v, 0.0, X, y, order, bs, 0.05, 0.01)
        states[name] = (W, b, v, c)
    for a, b in zip(states["numpy"], states["numba"]):
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)
