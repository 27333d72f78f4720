"""scikit-learn style estimators that report SURE after fitting."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_design, check_observation, check_positive, check_problem
from .linop import DenseOp
from .prox import L1
from .sure import EstimatorSpec, evaluate_sure
from .trace import TraceConfig
from .unroll import SolveConfig, solve


class _SureMixin:
    def _configs(self):
        check_positive(self.sigma2, "sigma2")
        check_positive(self.tol, "tol")
        solver = SolveConfig(
            algorithm=self.algorithm,
            eta=check_positive(self.eta, "eta", allow_auto=True),
            tol=self.tol,
            max_iter=self.max_iter,
        )
        trace = TraceConfig(self.queries, self.trace_estimator, self.random_state)
        return solver, trace

    def _store_report(self, report):
        self.report_ = report
        self.sure_ = report.sure_value
        self.divergence_ = report.divergence_estimate
        self.n_iter_ = report.iterations
        self.converged_ = report.converged


class SUREDenoiser(_SureMixin, TransformerMixin, BaseEstimator):
    """Convex regularized regression ``A argmin_b 0.5||Ab - y||^2 + r(b)``.

    ``fit(y)`` solves the problem at the observation ``y`` and stores SURE of
    the fitted values. ``transform(y)`` returns the fitted values at ``y``.

    Parameters
    ----------
    operator : LinearOp
        Forward operator ``A``.
    regularizer : ProxOracle
        Regularizer ``r``.
    sigma2 : float
        Known noise variance.
    algorithm : {"ista", "fista", "admm"}
    eta : float or "auto"
        Step size (ISTA/FISTA) or penalty parameter (ADMM).
    tol, max_iter :
        Solver stopping rule on the relative iterate change.
    queries : int
        Budget of vector-Jacobian products for the divergence.
    trace_estimator : {"auto", "exact", "hutchinson", "hutchpp"}
    random_state : int
        Seed of the trace probes.

    Attributes
    ----------
    coef_ : ndarray or tuple of ndarray
        Fitted parameter in the operator's domain layout.
    mu_ : ndarray
        Fitted values ``A coef_``.
    sure_, divergence_, n_iter_, converged_, report_ :
        SURE value and diagnostics of the fit.
    """

    def __init__(self, operator=None, regularizer=None, sigma2=1.0, algorithm="fista",
                 eta="auto", tol=1e-10, max_iter=10000, queries=102,
                 trace_estimator="auto", random_state=0):
        self.operator = operator
        self.regularizer = regularizer
        self.sigma2 = sigma2
        self.algorithm = algorithm
        self.eta = eta
        self.tol = tol
        self.max_iter = max_iter
        self.queries = queries
        self.trace_estimator = trace_estimator
        self.random_state = random_state

    def fit(self, y, X=None):
        check_problem(self.operator, self.regularizer)
        y = check_observation(y, self.operator.shape.d)
        solver, trace = self._configs()
        spec = EstimatorSpec(self.operator, self.regularizer, float(self.sigma2), solver, trace)
        report = evaluate_sure(spec, y)
        self.coef_ = self.operator.unflatten(report.solution.beta_hat)
        self.mu_ = report.solution.mu_hat
        self.eta_ = report.solution.eta
        self._store_report(report)
        return self

    def transform(self, y):
        check_is_fitted(self, "mu_")
        y = check_observation(y, self.operator.shape.d)
        solver, _ = self._configs()
        cfg = SolveConfig(solver.algorithm, self.eta_, solver.tol, solver.max_iter, False)
        return solve(self.operator, self.regularizer, y, cfg).mu_hat

    def score(self, y=None):
        """Negative SURE of the fit (larger is better)."""
        check_is_fitted(self, "sure_")
        if y is None:
            return -self.sure_
        y = check_observation(y, self.operator.shape.d)
        solver, trace = self._configs()
        spec = EstimatorSpec(self.operator, self.regularizer, float(self.sigma2), solver, trace)
        return -evaluate_sure(spec, y).sure_value


class LassoSURE(_SureMixin, RegressorMixin, BaseEstimator):
    """LASSO ``min 0.5||Xb - y||^2 + alpha ||b||_1`` with SURE of the fitted values.

    ``sure_`` estimates ``E||X coef_ - X beta||^2`` at the training design.
    """

    def __init__(self, alpha=1.0, sigma2=1.0, algorithm="fista", eta="auto", tol=1e-10,
                 max_iter=10000, queries=102, trace_estimator="auto", random_state=0):
        self.alpha = alpha
        self.sigma2 = sigma2
        self.algorithm = algorithm
        self.eta = eta
        self.tol = tol
        self.max_iter = max_iter
        self.queries = queries
        self.trace_estimator = trace_estimator
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_design(X, y)
        check_positive(self.alpha, "alpha")
        solver, trace = self._configs()
        spec = EstimatorSpec(DenseOp(X), L1(self.alpha), float(self.sigma2), solver, trace)
        report = evaluate_sure(spec, y)
        self.coef_ = report.solution.beta_hat
        self.n_features_in_ = X.shape[1]
        self._store_report(report)
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise ValueError(f"X must have {self.n_features_in_} columns")
        return X @ self.coef_
