"""Stein's unbiased risk estimate for convex regularized regression.

``SURE = -d sigma^2 + ||mu_hat(y) - y||^2 + 2 sigma^2 div mu_hat(y)`` where the
divergence is the trace of the Jacobian of ``y -> A beta_hat(y)``, estimated
through the unrolled solver's vector-Jacobian products.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, DimensionError, NumericalError, TapeMismatchError
from .linop import LinearOp
from .prox import ProxOracle
from .trace import TraceConfig, VecMatOracle, estimate_trace
from .unroll import Solution, SolveConfig, solve, vjp_solution

SURE_SOLVER = SolveConfig(algorithm="fista", tol=1e-10, max_iter=10000)


@dataclass(frozen=True)
class EstimatorSpec:
    A: LinearOp
    regularizer: ProxOracle
    sigma2: float
    solver: SolveConfig = SURE_SOLVER
    trace: TraceConfig = TraceConfig()

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ConfigError("sigma2 must be positive")
        size = self.regularizer.size
        if size is not None and size != self.A.shape.p:
            raise DimensionError(
                f"regularizer acts on {size} entries, operator domain has {self.A.shape.p}"
            )


@dataclass
class SureReport:
    sure_value: float
    residual_sq: float
    divergence_estimate: float
    sigma2: float
    d: int
    iterations: int
    converged: bool
    trace_estimator: str
    variance_bound_value: float
    solution: Solution | None = field(default=None, repr=False)

    @property
    def coordinatewise(self):
        return self.sure_value / self.d

    def reassemble(self):
        return sure_from_parts(self.d, self.sigma2, self.residual_sq, self.divergence_estimate)

    def as_dict(self):
        return {
            "sure": self.sure_value,
            "sure_per_coord": self.coordinatewise,
            "residual_sq": self.residual_sq,
            "divergence": self.divergence_estimate,
            "sigma2": self.sigma2,
            "d": self.d,
            "iterations": self.iterations,
            "converged": self.converged,
            "trace_estimator": self.trace_estimator,
            "variance_bound": self.variance_bound_value,
        }


def sure_from_parts(d, sigma2, residual_sq, divergence):
    return -d * sigma2 + residual_sq + 2.0 * sigma2 * divergence


def divergence_oracle(spec, solution):
    """``v -> (D mu_hat(y))* v = (D beta_hat(y))* (A* v)`` from a taped solve."""
    tape = solution.tape
    if tape is None:
        raise TapeMismatchError("divergence oracle needs a solve with record_tape=True")
    if tape.algorithm != spec.solver.algorithm:
        raise TapeMismatchError(
            f"tape recorded by {tape.algorithm}, spec uses {spec.solver.algorithm}"
        )
    A, r = spec.A, spec.regularizer
    return VecMatOracle(A.shape.d, lambda v: vjp_solution(tape, A, r, A.rmatvec(v)))


def evaluate_sure(spec, y, trace=None):
    """Solve with a tape, estimate the divergence and assemble SURE.

    A non-converged solve is reported through ``converged=False``; the value
    is still computed for the unrolled map.
    """
    A = spec.A
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != A.shape.d:
        raise DimensionError(f"y has length {y.shape[0]}, expected {A.shape.d}")
    trace = spec.trace if trace is None else trace
    cfg = spec.solver
    if not cfg.record_tape:
        cfg = SolveConfig(cfg.algorithm, cfg.eta, cfg.tol, cfg.max_iter, True, cfg.cg_tol)
    solution = solve(A, spec.regularizer, y, cfg)
    divergence, used = estimate_trace(divergence_oracle(spec, solution), trace)
    residual_sq = float(np.sum((solution.mu_hat - y) ** 2))
    if not np.isfinite(residual_sq) or not np.isfinite(divergence):
        raise NumericalError("non-finite SURE components")
    d = A.shape.d
    value = sure_from_parts(d, spec.sigma2, residual_sq, divergence)
    return SureReport(
        sure_value=value,
        residual_sq=residual_sq,
        divergence_estimate=divergence,
        sigma2=spec.sigma2,
        d=d,
        iterations=solution.iterations,
        converged=solution.converged,
        trace_estimator=used,
        variance_bound_value=variance_bound(d, spec.sigma2, max(value, 0.0)),
        solution=solution,
    )


def card(beta, tol=None):
    """Entries with ``|beta_i| > tol``; default ``tol = 1e-6 * max(1, ||beta||_inf)``."""
    beta = np.asarray(beta, dtype=float).ravel()
    if tol is None:
        tol = 1e-6 * max(1.0, float(np.max(np.abs(beta), initial=0.0)))
    return int(np.count_nonzero(np.abs(beta) > tol))


def ridge_hat_lambda(lam, convention="hat"):
    """Penalty in ``H = X (X^T X + lam_r I)^{-1} X^T`` for a ridge weight ``lam``.

    ``"hat"`` uses ``lam`` as is; ``"objective"`` corresponds to minimizing
    ``0.5 ||Xb - y||^2 + lam ||b||^2``, whose normal equations carry ``2 lam``.
    """
    if convention == "hat":
        return float(lam)
    if convention == "objective":
        return 2.0 * float(lam)
    raise ConfigError(f"unknown ridge convention {convention!r}")


def analytic_sure(kind, X, y, sigma2, lam=None, beta_hat=None, card_tol=None,
                  ridge_convention="hat"):
    """Closed-form SURE for ordinary least squares, ridge and LASSO."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    d, p = X.shape
    if kind == "ols":
        G = X.T @ X
        if np.linalg.matrix_rank(G) < p:
            raise NumericalError("X^T X is singular; OLS SURE undefined")
        Hy = X @ np.linalg.solve(G, X.T @ y)
        return (2 * p - d) * sigma2 + float(np.sum((Hy - y) ** 2))
    if kind == "ridge":
        if lam is None:
            raise ConfigError("ridge SURE needs lam")
        lam_r = ridge_hat_lambda(lam, ridge_convention)
        K = X.T @ X + lam_r * np.eye(p)
        Hy = X @ np.linalg.solve(K, X.T @ y)
        trace_H = float(np.trace(np.linalg.solve(K, X.T @ X)))
        return -d * sigma2 + float(np.sum((Hy - y) ** 2)) + 2 * sigma2 * trace_H
    if kind == "lasso":
        if beta_hat is None:
            raise ConfigError("lasso SURE needs beta_hat")
        beta_hat = np.asarray(beta_hat, dtype=float).ravel()
        resid = float(np.sum((X @ beta_hat - y) ** 2))
        return -d * sigma2 + resid + 2 * sigma2 * card(beta_hat, card_tol)
    raise ConfigError(f"unknown analytic SURE kind {kind!r}")


def lambda_max(A, y, kind):
    """Smallest penalty for which the estimate is zero.

    ``nuclear``: ``sigma_max(A* y)``; ``l1``: ``||A* y||_inf``; ``robust_pca``:
    the pair ``(sigma_max(y), max |y_ij|)`` with ``y`` shaped like one block.
    """
    y = np.asarray(y, dtype=float).ravel()
    Aty = A.rmatvec(y)
    if kind == "l1":
        return float(np.max(np.abs(Aty)))
    if kind == "nuclear":
        (shape,) = A.shape.domain_dims
        return float(np.linalg.norm(Aty.reshape(shape), 2))
    if kind == "robust_pca":
        shape = A.shape.domain_dims[0]
        Y = y.reshape(shape)
        return float(np.linalg.norm(Y, 2)), float(np.max(np.abs(Y)))
    raise ConfigError(f"unknown lambda_max kind {kind!r}")


def variance_bound(d, sigma2, risk_estimate):
    """Upper bound ``3 sigma^4 d + 4 sigma^2 R`` on the variance of SURE."""
    if risk_estimate < 0:
        raise ValueError("risk_estimate must be nonnegative")
    return 3.0 * sigma2**2 * d + 4.0 * sigma2 * risk_estimate
