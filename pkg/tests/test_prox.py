import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from steinrisk.prox import (L1, ElasticNet, Nuclear, SeparablePair, Zero, prox_eval, prox_vjp,
                            soft_threshold)

ORACLES = {
    "zero": lambda: Zero(),
    "l1": lambda: L1(0.6),
    "elastic_net": lambda: ElasticNet(0.4, 0.3),
    "nuclear": lambda: Nuclear(0.9, (4, 3)),
    "pair": lambda: SeparablePair(Nuclear(0.7, (2, 3)), L1(0.5)),
}


def fd_vjp(oracle, v, eta, u, h=1e-6):
    return np.array([(oracle.prox(v + h * e, eta)[0] - oracle.prox(v - h * e, eta)[0]) @ u
                     for e in np.eye(v.size)]) / (2 * h)


@pytest.mark.parametrize("name", ORACLES)
@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), eta=st.floats(0.1, 3.0))
def test_prox_is_nonexpansive(name, seed, eta):
    r = ORACLES[name]()
    rng = np.random.default_rng(seed)
    a, b = 2 * rng.standard_normal(12), 2 * rng.standard_normal(12)
    gap = np.linalg.norm(r.prox(a, eta)[0] - r.prox(b, eta)[0])
    assert gap <= (1 + 1e-12) * np.linalg.norm(a - b)


@pytest.mark.parametrize("name", ["l1", "elastic_net", "nuclear", "pair"])
def test_prox_minimizes_objective(name):
    # oracle: derivative-free minimization of eta r(b) + 0.5||b - v||^2
    r = ORACLES[name]()
    v = np.random.default_rng(7).standard_normal(12) * 2
    eta = 0.8
    out = r.prox(v, eta)[0]

    def f(b):
        return eta * r.value(b) + 0.5 * np.sum((b - v) ** 2)

    ref = minimize(f, v, method="Powell", options={"xtol": 1e-10, "ftol": 1e-14,
                                                    "maxfev": 200000}).x
    assert f(out) <= f(ref) + 1e-8


def test_nuclear_prox_against_dense_svd():
    X = np.random.default_rng(8).standard_normal((5, 7))
    out = Nuclear(1.3, (5, 7)).prox(X.ravel(), 0.5)[0].reshape(5, 7)
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    np.testing.assert_allclose(out, (U * np.maximum(s - 0.65, 0)) @ Vt, atol=1e-12)


@pytest.mark.parametrize("name", ["l1", "elastic_net", "nuclear", "pair"])
@pytest.mark.parametrize("seed", range(3))
def test_vjp_against_finite_differences(name, seed):
    r = ORACLES[name]()
    rng = np.random.default_rng(seed)
    v, u = 2 * rng.standard_normal(12), rng.standard_normal(12)
    g = r.vjp(u, r.prox(v, 1.1)[1])
    np.testing.assert_allclose(g, fd_vjp(r, v, 1.1, u), rtol=1e-6, atol=1e-7)


@pytest.mark.parametrize("shape", [(5, 3), (3, 5), (4, 4)])
def test_nuclear_vjp_batched_and_shapes(shape):
    r = Nuclear(0.8, shape)
    rng = np.random.default_rng(9)
    v = 2 * rng.standard_normal(r.size)
    U = rng.standard_normal((r.size, 5))
    cache = r.prox(v, 1.0)[1]
    batched = r.vjp(U, cache)
    np.testing.assert_allclose(batched, np.stack([r.vjp(c, cache) for c in U.T], 1), atol=1e-12)
    np.testing.assert_allclose(batched[:, 0], fd_vjp(r, v, 1.0, U[:, 0]), rtol=1e-6, atol=1e-7)


def test_nuclear_vjp_is_self_adjoint():
    # the prox is a gradient map, so its Jacobian is symmetric
    r = Nuclear(0.5, (4, 3))
    rng = np.random.default_rng(10)
    cache = r.prox(2 * rng.standard_normal(12), 1.0)[1]
    J = r.vjp(np.eye(12), cache)
    np.testing.assert_allclose(J, J.T, atol=1e-10)


def test_l1_kink_convention():
    r = L1(1.0)
    v = np.array([1.0, -1.0, 2.0, 0.5])
    g = r.vjp(np.ones(4), r.prox(v, 1.0)[1])
    np.testing.assert_array_equal(g, [0.0, 0.0, 1.0, 0.0])


def test_soft_threshold():
    np.testing.assert_array_equal(soft_threshold(np.array([-3.0, 0.5, 2.0]), 1.0),
                                  [-2.0, 0.0, 1.0])


def test_structured_helpers():
    r = SeparablePair(Nuclear(0.3, (2, 2)), L1(0.2))
    L, S = np.eye(2) * 2, np.array([[0.1, 1.0], [-1.0, 0.0]])
    out, cache = prox_eval(r, (L, S), 1.0)
    assert isinstance(out, tuple) and out[0].shape == (2, 2)
    np.testing.assert_allclose(out[1], soft_threshold(S, 0.2))
    g = prox_vjp(r, (L, S), 1.0, (np.ones((2, 2)), np.ones((2, 2))))
    np.testing.assert_array_equal(g[1], (np.abs(S) > 0.2).astype(float))
    M = np.arange(6.0).reshape(2, 3)
    assert prox_eval(Nuclear(0.1, (2, 3)), M, 1.0)[0].shape == (2, 3)
    with pytest.raises(ValueError):
        prox_eval(L1(1.0), M, 0.0)


def test_prox_examples():
    np.testing.assert_allclose(L1(1.0).prox(np.array([3.0, -0.5, 1.0]), 1.0)[0], [2, 0, 0])
    out = Nuclear(1.0, (2, 2)).prox(np.diag([3.0, 0.5]).ravel(), 1.0)[0]
    np.testing.assert_allclose(out.reshape(2, 2), np.diag([2.0, 0.0]), atol=1e-12)
    np.testing.assert_allclose(ElasticNet(1.0, 1.0).prox(np.array([4.0]), 1.0)[0], [1.0])
    r = SeparablePair(L1(0.5), Nuclear(1.0, (2, 2)), split=4)
    S, L = np.array([1.0, -0.2, 0.7, 2.0]), np.diag([3.0, 0.5]).ravel()
    out = r.prox(np.concatenate([S, L]), 1.0)[0]
    np.testing.assert_allclose(out[:4], soft_threshold(S, 0.5))
    np.testing.assert_allclose(out[4:], np.diag([2.0, 0.0]).ravel(), atol=1e-12)


def test_vjp_examples():
    r = L1(1.0)
    cache = r.prox(np.array([3.0, -0.5, 1.0]), 1.0)[1]
    np.testing.assert_array_equal(r.vjp(np.ones(3), cache), [1, 0, 0])
    nuc = Nuclear(1.0, (3, 2))
    cache = nuc.prox(np.zeros(6), 1.0)[1]
    Z = np.random.default_rng(0).standard_normal(6)
    assert not np.any(nuc.vjp(Z, cache))
