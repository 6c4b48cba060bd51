"""Backend parity: the compiled kernels must reproduce the pure-Python
fallback bit for bit, on every potential kind."""

import numpy as np
import pytest

from tangentstat import _kernels
from tangentstat._kernels import _fallback

try:
    from tangentstat._kernels import _core
except ImportError:
    _core = None

needs_core = pytest.mark.skipif(_core is None, reason="extension not built")

KINDS = [
    (_kernels.KIND_HARMONIC, np.array([1.3])),
    (_kernels.KIND_POLYNOMIAL, np.array([0.5, -0.2, 1.0, 0.0, 0.25])),
    (_kernels.KIND_DOUBLE_WELL, np.array([1.0])),
]


def test_backend_name_exposed():
    assert _kernels.BACKEND in ("compiled", "python")


@needs_core
@pytest.mark.parametrize("kind,params", KINDS)
def test_rk4_path_bitwise_parity(kind, params):
    rng = np.random.default_rng(kind)
    q0, qt0 = rng.normal(size=2), rng.normal(size=2)
    a_q, a_qt = _core.rk4_path(kind, params, q0, qt0, 7e-3, 400)
    b_q, b_qt = _fallback.rk4_path(kind, params, q0, qt0, 7e-3, 400)
    assert np.array_equal(a_q, b_q)
    assert np.array_equal(a_qt, b_qt)


@needs_core
@pytest.mark.parametrize("kind,params", KINDS)
def test_rk4_advect_bitwise_parity(kind, params):
    rng = np.random.default_rng(kind + 10)
    qs, qts = rng.normal(size=(25, 3)), rng.normal(size=(25, 3))
    a_q, a_qt = _core.rk4_advect(kind, params, qs, qts, 5e-3, 200)
    b_q, b_qt = _fallback.rk4_advect(kind, params, qs, qts, 5e-3, 200)
    assert np.array_equal(a_q, b_q)
    assert np.array_equal(a_qt, b_qt)


@needs_core
@pytest.mark.parametrize("kind,params", KINDS)
def test_rk4_tangent_bitwise_parity(kind, params):
    rng = np.random.default_rng(kind + 20)
    q0, qt0 = rng.normal(size=2), rng.normal(size=2)
    m0 = np.eye(4)
    out_a = _core.rk4_tangent(kind, params, q0, qt0, m0, 4e-3, 250)
    out_b = _fallback.rk4_tangent(kind, params, q0, qt0, m0, 4e-3, 250)
    for a, b in zip(out_a, out_b):
        assert np.array_equal(a, b)


@needs_core
@pytest.mark.parametrize("kind,params", KINDS)
def test_metropolis_bitwise_parity(kind, params):
    rng = np.random.default_rng(kind + 30)
    n = 30_000
    normals = rng.standard_normal((n, 2))
    uniforms = rng.random(n)
    args = (kind, params, 1.4, np.array([0.2]), np.array([0.0]),
            np.array([0.8]), np.array([0.8]), normals, uniforms, 500, 3)
    a_q, a_qt, a_acc = _core.metropolis_chain(*args)
    b_q, b_qt, b_acc = _fallback.metropolis_chain(*args)
    assert a_acc == b_acc
    assert np.array_equal(a_q, b_q)
    assert np.array_equal(a_qt, b_qt)


def test_free_particle_step_is_exact():
    # V = 0: RK4 reproduces the straight-line motion exactly
    q, qt = _kernels.rk4_advect(_kernels.KIND_POLYNOMIAL, np.array([0.0]),
                                np.array([[0.0]]), np.array([[1.0]]), 0.5, 1)
    assert q[0, 0] == 0.5
    assert qt[0, 0] == 1.0


def test_metropolis_thinning_counts():
    rng = np.random.default_rng(0)
    n, burn, thin = 1000, 100, 7
    normals = rng.standard_normal((n, 2))
    uniforms = rng.random(n)
    qs, qts, _ = _kernels.metropolis_chain(
        _kernels.KIND_HARMONIC, np.array([1.0]), 1.0,
        np.array([0.0]), np.array([0.0]), np.array([1.0]), np.array([1.0]),
        normals, uniforms, burn, thin)
    assert qs.shape == (1 + (n - 1 - burn) // thin, 1)
    assert qts.shape == qs.shape
