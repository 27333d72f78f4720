import zlib

import numpy as np
import pytest

from conftest import fd_jacobian, fixed_steps
from steinrisk.exceptions import ConfigError, NumericalError, TapeMismatchError
from steinrisk.linop import DenseOp, SelectionOp, SumPairOp
from steinrisk.prox import L1, ElasticNet, Nuclear, SeparablePair, Zero
from steinrisk.unroll import SolveConfig, fista_momentum, solve, vjp_solution


def lasso_instance(seed=0, d=15, p=25):
    rng = np.random.default_rng(seed)
    A = DenseOp(rng.standard_normal((d, p)))
    y = 3 * rng.standard_normal(d)
    lam = 0.3 * np.max(np.abs(A.rmatvec(y)))
    return A, L1(lam), y


def objective(A, r, y, b):
    return 0.5 * np.sum((A.matvec(b) - y) ** 2) + r.value(b)


@pytest.mark.parametrize("algorithm", ["ista", "fista", "admm"])
def test_solvers_reach_the_same_minimum(algorithm):
    A, r, y = lasso_instance()
    # ADMM's penalty is scaled to the design (eta = 1 suits selection operators)
    eta = 0.02 if algorithm == "admm" else "auto"
    sol = solve(A, r, y, SolveConfig(algorithm, eta, tol=1e-11, max_iter=50000,
                                     record_tape=False))
    ref = solve(A, r, y, SolveConfig("fista", tol=1e-13, max_iter=100000, record_tape=False))
    assert sol.converged
    assert objective(A, r, y, sol.beta_hat) == pytest.approx(
        objective(A, r, y, ref.beta_hat), rel=1e-8)
    np.testing.assert_allclose(sol.mu_hat, A.matvec(sol.beta_hat))


def test_fixed_point_optimality():
    A, r, y = lasso_instance(1)
    cfg = SolveConfig("fista", tol=1e-10, max_iter=20000)
    sol = solve(A, r, y, cfg)
    b, eta = sol.beta_hat, sol.eta
    step = r.prox(b - eta * A.rmatvec(A.matvec(b) - y), eta)[0]
    assert np.linalg.norm(b - step) <= 10 * cfg.tol * max(1.0, np.linalg.norm(b))


def test_ridge_like_against_closed_form():
    # elastic net with lam1 = 0 is ridge: (A^T A + 2 lam2 I)^{-1} A^T y
    rng = np.random.default_rng(2)
    M = rng.standard_normal((12, 8))
    y = rng.standard_normal(12)
    sol = solve(DenseOp(M), ElasticNet(0.0, 0.5), y, SolveConfig("fista", tol=1e-13,
                                                                  max_iter=50000))
    ref = np.linalg.solve(M.T @ M + np.eye(8), M.T @ y)
    np.testing.assert_allclose(sol.beta_hat, ref, atol=1e-9)


def test_momentum_weights():
    assert fista_momentum(1) == pytest.approx(0.25)
    assert fista_momentum(10) == pytest.approx(10 / 13)


def test_non_convergence_is_flagged():
    A, r, y = lasso_instance()
    sol = solve(A, r, y, SolveConfig("ista", tol=1e-14, max_iter=3))
    assert not sol.converged and sol.iterations == 3 and len(sol.tape) == 3


@pytest.mark.parametrize("algorithm", ["ista", "fista"])
def test_divergent_step_size_raises(algorithm):
    A, r, y = lasso_instance()
    with pytest.raises(NumericalError):
        solve(A, r, y, SolveConfig(algorithm, eta=1e300, max_iter=50))


def test_config_validation():
    with pytest.raises(ConfigError):
        SolveConfig("newton")
    with pytest.raises(ConfigError):
        SolveConfig(eta=-1.0)
    with pytest.raises(ConfigError):
        SolveConfig(max_iter=0)


def generic_problem(kind, rng):
    if kind == "l1":
        A = DenseOp(rng.standard_normal((10, 14)))
        return A, L1(0.8), 3 * rng.standard_normal(10)
    if kind == "elastic_net":
        A = DenseOp(rng.standard_normal((10, 14)))
        return A, ElasticNet(0.6, 0.2), 3 * rng.standard_normal(10)
    if kind == "nuclear":
        A = SelectionOp((5, 4), rng.choice(20, 12, replace=False))
        return A, Nuclear(0.7, (5, 4)), 3 * rng.standard_normal(12)
    A = SumPairOp((4, 3))
    return A, SeparablePair(Nuclear(1.0, (4, 3)), L1(0.5)), 3 * rng.standard_normal(12)


@pytest.mark.parametrize("algorithm", ["ista", "fista", "admm"])
@pytest.mark.parametrize("kind", ["l1", "elastic_net", "nuclear", "pair"])
def test_vjp_matches_finite_difference_jacobian(algorithm, kind):
    rng = np.random.default_rng(zlib.crc32(f"{algorithm}-{kind}".encode()))
    A, r, y = generic_problem(kind, rng)
    sol = solve(A, r, y, SolveConfig(algorithm, tol=1e-300, max_iter=150, cg_tol=1e-13))
    J = fd_jacobian(A, r, y, fixed_steps(sol))
    U = rng.standard_normal((A.shape.p, 4))
    np.testing.assert_allclose(vjp_solution(sol.tape, A, r, U), J.T @ U, rtol=1e-5, atol=1e-7)


def test_dense_admm_vjp_uses_cg():
    rng = np.random.default_rng(11)
    A = DenseOp(rng.standard_normal((8, 6)))
    r, y = L1(0.5), 2 * rng.standard_normal(8)
    sol = solve(A, r, y, SolveConfig("admm", tol=1e-300, max_iter=60, cg_tol=1e-13))
    J = fd_jacobian(A, r, y, fixed_steps(sol))
    u = rng.standard_normal(6)
    np.testing.assert_allclose(vjp_solution(sol.tape, A, r, u), J.T @ u, rtol=1e-5, atol=1e-8)


def test_unregularized_jacobian_is_pseudo_inverse():
    # r = 0 with a full column rank design: beta_hat = A^+ y exactly linear
    rng = np.random.default_rng(12)
    M = rng.standard_normal((9, 4))
    A = DenseOp(M)
    sol = solve(A, Zero(), rng.standard_normal(9), SolveConfig("fista", tol=1e-14,
                                                               max_iter=20000))
    G = vjp_solution(sol.tape, A, Zero(), np.eye(4)).T
    np.testing.assert_allclose(G, np.linalg.pinv(M), atol=1e-8)


def test_tape_checks():
    A, r, y = lasso_instance()
    sol = solve(A, r, y, SolveConfig("fista", record_tape=False, max_iter=10))
    with pytest.raises(TapeMismatchError):
        vjp_solution(sol.tape, A, r, np.ones(A.shape.p))
    sol = solve(A, r, y, SolveConfig("fista", max_iter=10))
    with pytest.raises(TapeMismatchError):
        vjp_solution(sol.tape, DenseOp(np.ones((3, 3))), r, np.ones(3))
    with pytest.raises(TapeMismatchError):
        vjp_solution(sol.tape, A, r, np.ones(A.shape.p + 1))


@pytest.mark.parametrize("algorithm", ["ista", "fista"])
def test_identity_is_a_fixed_point_in_two_steps(algorithm):
    from steinrisk.linop import IdentityOp

    y = np.random.default_rng(3).standard_normal(7)
    sol = solve(IdentityOp(7), Zero(), y, SolveConfig(algorithm, eta=1.0))
    assert sol.iterations <= 2
    np.testing.assert_allclose(sol.beta_hat, y)
    u = np.arange(7.0)
    np.testing.assert_allclose(vjp_solution(sol.tape, IdentityOp(7), Zero(), u), u)


def test_admm_identity_returns_y():
    from steinrisk.linop import IdentityOp

    y = np.random.default_rng(4).standard_normal(6)
    sol = solve(IdentityOp(6), Zero(), y, SolveConfig("admm", eta=1.0, tol=1e-12))
    np.testing.assert_allclose(sol.beta_hat, y, atol=1e-10)


@pytest.mark.parametrize("algorithm", ["ista", "fista", "admm"])
def test_nuclear_above_lambda_max_gives_zero(algorithm):
    rng = np.random.default_rng(5)
    A = SelectionOp((6, 4), rng.choice(24, 14, replace=False))
    y = rng.standard_normal(14)
    Y = A.rmatvec(y).reshape(6, 4)
    r = Nuclear(1.01 * np.linalg.norm(Y, 2), (6, 4))
    sol = solve(A, r, y, SolveConfig(algorithm, tol=1e-10, max_iter=5000))
    assert not np.any(sol.beta_hat)


def test_ista_objective_is_monotone():
    A, r, y = lasso_instance(6)
    sol = solve(A, r, y, SolveConfig("ista", tol=1e-300, max_iter=1, record_tape=False))
    values = []
    for k in range(1, 40):
        cfg = SolveConfig("ista", sol.eta, tol=1e-300, max_iter=k, record_tape=False)
        values.append(objective(A, r, y, solve(A, r, y, cfg).beta_hat))
    assert np.all(np.diff(values) <= 1e-12 * np.abs(values[:-1]))


def test_lasso_objective_admm_matches_fista():
    A, r, y = lasso_instance(7)
    f = solve(A, r, y, SolveConfig("fista", tol=1e-12, max_iter=50000, record_tape=False))
    a = solve(A, r, y, SolveConfig("admm", 0.02, tol=1e-10, max_iter=50000, record_tape=False))
    assert objective(A, r, y, a.beta_hat) == pytest.approx(objective(A, r, y, f.beta_hat),
                                                           rel=1e-6)


@pytest.mark.parametrize("algorithm", ["ista", "fista", "admm"])
def test_tape_determinism(algorithm):
    A, r, y = lasso_instance(8)
    cfg = SolveConfig(algorithm, 0.02 if algorithm == "admm" else "auto", tol=1e-8,
                      max_iter=3000)
    s1, s2 = solve(A, r, y, cfg), solve(A, r, y, cfg)
    assert s1.iterations == s2.iterations
    np.testing.assert_array_equal(s1.beta_hat, s2.beta_hat)
    u = np.random.default_rng(9).standard_normal(A.shape.p)
    np.testing.assert_array_equal(vjp_solution(s1.tape, A, r, u), vjp_solution(s2.tape, A, r, u))
