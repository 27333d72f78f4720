"""Trace estimation through a vector-matrix oracle ``v -> M* v``.

Oracles accept a single vector ``(d,)`` or a block ``(d, k)`` and return an
array of the same shape, so estimators query in blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr

from .exceptions import ConfigError

ESTIMATORS = ("auto", "exact", "hutchinson", "hutchpp")

# exact trace is evaluated in blocks of this many unit vectors
EXACT_BLOCK = 128


@dataclass(frozen=True)
class VecMatOracle:
    dim: int
    evaluate: object  # callable: (d,) or (d, k) -> same shape

    def __call__(self, v):
        return self.evaluate(v)

    @classmethod
    def from_matrix(cls, M):
        M = np.asarray(M, dtype=float)
        return cls(M.shape[0], lambda v: M.T @ v)


@dataclass(frozen=True)
class TraceConfig:
    queries: int = 102
    estimator: str = "auto"
    seed: int = 0

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"unknown trace estimator {self.estimator!r}")
        if int(self.queries) < 1:
            raise ConfigError("queries must be >= 1")
        if self.estimator == "hutchpp" and self.queries % 3:
            raise ConfigError("hutchpp needs a query budget divisible by 3")


def rademacher(rng, shape):
    return rng.choice(np.array([-1.0, 1.0]), size=shape)


def exact_trace(oracle):
    """``sum_i e_i^T (M* e_i)`` with exactly ``d`` oracle queries."""
    d = oracle.dim
    total = 0.0
    for start in range(0, d, EXACT_BLOCK):
        stop = min(start + EXACT_BLOCK, d)
        E = np.zeros((d, stop - start))
        E[np.arange(start, stop), np.arange(stop - start)] = 1.0
        MtE = oracle(E)
        total += float(np.sum(MtE[np.arange(start, stop), np.arange(stop - start)]))
    return total


def hutchinson(oracle, m, seed=0):
    """Mean of ``z^T M* z`` over ``m`` Rademacher probes."""
    if m < 1:
        raise ConfigError("m must be >= 1")
    rng = np.random.default_rng(seed)
    Z = rademacher(rng, (oracle.dim, m))
    return float(np.sum(Z * oracle(Z)) / m)


def _orthonormal_basis(Y, rtol=1e-10):
    """Orthonormal columns spanning range(Y); rank-deficient sketches shrink."""
    if Y.shape[1] == 0:
        return Y
    Qf, R, _ = qr(Y, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return Qf[:, :0]
    rank = int(np.sum(diag > rtol * diag[0]))
    return Qf[:, :rank]


def hutchpp(oracle, m, seed=0):
    """Hutch++ with ``m`` queries split evenly into sketch / exact / residual phases.

    Operators of dimension ``<= m`` are traced exactly instead.
    """
    if m < 3 or m % 3:
        raise ConfigError("hutchpp needs m >= 3 divisible by 3")
    d = oracle.dim
    if d <= m:
        return exact_trace(oracle)
    k = m // 3
    rng = np.random.default_rng(seed)
    S = rademacher(rng, (d, k))
    G = rademacher(rng, (d, k))
    Q = _orthonormal_basis(oracle(S))
    # trace(Q^T M* Q) = trace(Q^T M Q)
    low_rank = float(np.sum(Q * oracle(Q))) if Q.shape[1] else 0.0
    Gp = G - Q @ (Q.T @ G)
    residual = float(np.sum(Gp * oracle(Gp)) / k)
    return low_rank + residual


def estimate_trace(oracle, cfg=TraceConfig()):
    """Dispatch per ``cfg``; returns ``(estimate, estimator_used)``.

    ``auto`` traces exactly when ``d <= queries``, else uses Hutch++ (with the
    budget rounded down to a multiple of 3).
    """
    est = cfg.estimator
    if est == "auto":
        est = "exact" if oracle.dim <= cfg.queries else "hutchpp"
    if est == "exact":
        return exact_trace(oracle), "exact"
    if est == "hutchinson":
        return hutchinson(oracle, cfg.queries, cfg.seed), "hutchinson"
    m = cfg.queries - cfg.queries % 3
    if m < 3:
        return hutchinson(oracle, cfg.queries, cfg.seed), "hutchinson"
    if oracle.dim <= m:
        return exact_trace(oracle), "exact"
    return hutchpp(oracle, m, cfg.seed), "hutchpp"
