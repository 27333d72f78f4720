"""Quick invariant checks on tiny instances (``steinrisk selfcheck``)."""

import numpy as np

from .linop import DenseOp, IdentityOp, SelectionOp, SumPairOp
from .prox import L1, ElasticNet, Nuclear, SeparablePair, Zero
from .sure import EstimatorSpec, card, divergence_oracle, evaluate_sure
from .trace import TraceConfig, VecMatOracle, exact_trace, hutchpp
from .unroll import SolveConfig, solve, vjp_solution


def _adjoint(rng):
    ops = [DenseOp(rng.standard_normal((6, 4))), SelectionOp((4, 3), [0, 5, 7, 11]),
           SumPairOp((3, 2)), IdentityOp((3, 3))]
    worst = 0.0
    for op in ops:
        for _ in range(20):
            b = rng.standard_normal(op.shape.p)
            v = rng.standard_normal(op.shape.d)
            Ab = op.matvec(b)
            gap = abs(Ab @ v - b @ op.rmatvec(v)) / (np.linalg.norm(Ab) * np.linalg.norm(v) + 1)
            worst = max(worst, gap)
    return worst <= 1e-10, f"max adjoint gap {worst:.2e}"


def _nonexpansive(rng):
    oracles = [L1(0.7), ElasticNet(0.5, 0.3), Nuclear(0.8, (4, 3)),
               SeparablePair(Nuclear(0.5, (2, 3)), L1(0.4)), Zero()]
    worst = 0.0
    for r in oracles:
        for _ in range(20):
            a, b = rng.standard_normal(12) * 2, rng.standard_normal(12) * 2
            ratio = np.linalg.norm(r.prox(a, 1.3)[0] - r.prox(b, 1.3)[0]) / np.linalg.norm(a - b)
            worst = max(worst, ratio)
    return worst <= 1 + 1e-12, f"max Lipschitz ratio {worst:.6f}"


def _nuclear_fd(rng):
    r = Nuclear(1.0, (5, 3))
    X = rng.standard_normal(15) * 2
    Z = rng.standard_normal(15)
    g = r.vjp(Z, r.prox(X, 1.0)[1])
    h = 1e-6
    fd = np.array([(r.prox(X + h * e, 1.0)[0] - r.prox(X - h * e, 1.0)[0]) @ Z / (2 * h)
                   for e in np.eye(15)])
    err = np.linalg.norm(g - fd) / np.linalg.norm(fd)
    return err <= 1e-6, f"relative error {err:.2e}"


def _unrolled_fd(rng):
    A = DenseOp(rng.standard_normal((10, 16)))
    r = L1(1.0)
    y = rng.standard_normal(10) * 3
    sol = solve(A, r, y, SolveConfig("fista", tol=1e-10, max_iter=5000))
    fixed = SolveConfig("fista", eta=sol.eta, tol=1e-300, max_iter=sol.iterations,
                        record_tape=False)
    u, e = rng.standard_normal(16), rng.standard_normal(10)
    h = 1e-6 * np.linalg.norm(y)
    fd = (solve(A, r, y + h * e, fixed).beta_hat - solve(A, r, y - h * e, fixed).beta_hat) @ u
    fd /= 2 * h
    g = vjp_solution(sol.tape, A, r, u) @ e
    err = abs(g - fd) / abs(fd)
    return err <= 1e-4, f"relative error {err:.2e}"


def _lasso_card(rng):
    A = DenseOp(rng.standard_normal((20, 40)))
    y = rng.standard_normal(20) * 2
    spec = EstimatorSpec(A, L1(0.3 * np.max(np.abs(A.rmatvec(y)))), 1.0,
                         SolveConfig("fista", tol=1e-10, max_iter=10000))
    sol = solve(A, spec.regularizer, y, spec.solver)
    div = exact_trace(divergence_oracle(spec, sol))
    k = card(sol.beta_hat)
    return abs(div - k) <= 0.01, f"divergence {div:.4f} vs card {k}"


def _hutchpp_low_rank(rng):
    W = rng.standard_normal((150, 10))
    M = W @ W.T
    est = hutchpp(VecMatOracle.from_matrix(M), 102, seed=1)
    err = abs(est - np.trace(M)) / np.trace(M)
    return err <= 1e-8, f"relative error {err:.2e}"


def _mle_identity(rng):
    spec = EstimatorSpec(IdentityOp(7), Zero(), 1.5, SolveConfig("ista", eta=1.0),
                         TraceConfig(estimator="exact"))
    rep = evaluate_sure(spec, rng.standard_normal(7))
    return abs(rep.sure_value - 7 * 1.5) <= 1e-10, f"SURE {rep.sure_value:.6f}"


CHECKS = {
    "adjoint identity": _adjoint,
    "prox nonexpansive": _nonexpansive,
    "nuclear prox VJP vs finite differences": _nuclear_fd,
    "unrolled FISTA VJP vs finite differences": _unrolled_fd,
    "LASSO divergence equals cardinality": _lasso_card,
    "Hutch++ exact on low rank": _hutchpp_low_rank,
    "SURE of the identity estimator": _mle_identity,
}


def run_selfcheck(seed=0):
    """Run every check; returns a list of ``(name, passed, detail)``."""
    results = []
    for name, check in CHECKS.items():
        passed, detail = check(np.random.default_rng(seed))
        results.append((name, bool(passed), detail))
    return results
