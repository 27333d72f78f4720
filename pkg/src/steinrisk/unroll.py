"""ISTA, FISTA and ADMM with an iteration tape for reverse-mode differentiation.

All solvers start from zero, so the Jacobian of the initial iterate with
respect to ``y`` vanishes and the reverse recursion needs no base term.
The differentiated object is the map ``y -> beta^(l)`` defined by exactly
the recorded number of iterations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, NumericalError, TapeMismatchError
from .linop import op_norm, solve_spd

ALGORITHMS = ("ista", "fista", "admm")


@dataclass(frozen=True)
class SolveConfig:
    """Solver settings.

    ``eta="auto"`` means ``1 / sigma_max(A)^2`` for ISTA/FISTA and ``1.0``
    for ADMM. ``cg_tol`` is the relative residual used for the ADMM linear
    solves when the operator's Gram matrix is not diagonal.
    """

    algorithm: str = "fista"
    eta: object = "auto"
    tol: float = 1e-8
    max_iter: int = 2000
    record_tape: bool = True
    cg_tol: float = 1e-10

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.eta != "auto" and not (isinstance(self.eta, (int, float)) and self.eta > 0):
            raise ConfigError(f"eta must be 'auto' or a positive number, got {self.eta!r}")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if int(self.max_iter) < 1:
            raise ConfigError("max_iter must be >= 1")
        if not self.cg_tol > 0:
            raise ConfigError("cg_tol must be positive")

    def resolve_eta(self, A):
        if self.eta != "auto":
            return float(self.eta)
        if self.algorithm == "admm":
            return 1.0
        return 1.0 / op_norm(A) ** 2


@dataclass
class Tape:
    """Per-iteration prox caches (plus momentum weights for FISTA)."""

    algorithm: str
    eta: float
    p: int
    d: int
    caches: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    cg_tol: float = 1e-10

    def __len__(self):
        return len(self.caches)


@dataclass
class Solution:
    beta_hat: np.ndarray  # flat
    mu_hat: np.ndarray
    iterations: int
    converged: bool
    final_rel_change: float
    tape: Tape | None = None
    eta: float = float("nan")


def _check_y(A, y):
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != A.shape.d:
        from .exceptions import DimensionError

        raise DimensionError(f"y has length {y.shape[0]}, operator codomain is {A.shape.d}")
    return y


def _rel(diff, ref, k):
    with np.errstate(invalid="ignore", over="ignore"):
        rel = float(np.linalg.norm(diff) / max(1.0, np.linalg.norm(ref)))
    if not np.isfinite(rel):
        raise NumericalError(f"iterates became non-finite at step {k} (step size too large?)")
    return rel


def ista_solve(A, r, y, cfg=SolveConfig(algorithm="ista")):
    """Proximal gradient: ``b <- prox_{eta r}(b - eta A*(A b - y))`` from ``b = 0``."""
    y = _check_y(A, y)
    eta = cfg.resolve_eta(A)
    tape = Tape("ista", eta, A.shape.p, A.shape.d) if cfg.record_tape else None
    b = np.zeros(A.shape.p)
    Aty = A.rmatvec(y)
    rel, converged, k = math.inf, False, 0
    for k in range(1, int(cfg.max_iter) + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            h = b - eta * (A.rmatvec(A.matvec(b)) - Aty)
        b_new, cache = r.prox(h, eta)
        if tape is not None:
            tape.caches.append(cache)
        rel = _rel(b_new - b, b, k)
        b = b_new
        if rel <= cfg.tol:
            converged = True
            break
    return Solution(b, A.matvec(b), k, converged, rel, tape, eta)


def fista_momentum(k):
    """Weight ``(tau_k - 1) / tau_{k+1}`` with ``tau_k = (k + 2) / 2``."""
    return ((k + 2) / 2 - 1) / ((k + 3) / 2)


def fista_solve(A, r, y, cfg=SolveConfig(algorithm="fista")):
    """Accelerated proximal gradient with ``tau_k = (k + 2) / 2`` from ``b = 0``."""
    y = _check_y(A, y)
    eta = cfg.resolve_eta(A)
    tape = Tape("fista", eta, A.shape.p, A.shape.d) if cfg.record_tape else None
    b = np.zeros(A.shape.p)
    b_prev = b
    Aty = A.rmatvec(y)
    rel, converged, k = math.inf, False, 0
    for k in range(1, int(cfg.max_iter) + 1):
        w = fista_momentum(k)
        a = b + w * (b - b_prev)
        with np.errstate(over="ignore", invalid="ignore"):
            h = a - eta * (A.rmatvec(A.matvec(a)) - Aty)
        b_new, cache = r.prox(h, eta)
        if tape is not None:
            tape.caches.append(cache)
            tape.weights.append(w)
        rel = _rel(b_new - b, b, k)
        b_prev, b = b, b_new
        if rel <= cfg.tol:
            converged = True
            break
    return Solution(b, A.matvec(b), k, converged, rel, tape, eta)


def admm_solve(A, r, y, cfg=SolveConfig(algorithm="admm")):
    """ADMM with the splitting ``b = z`` from ``z = u = 0``.

    Returns the prox iterate ``b`` of the last step as the estimate; it carries
    the exact sparsity / rank structure of the regularizer.
    """
    y = _check_y(A, y)
    eta = cfg.resolve_eta(A)
    tape = Tape("admm", eta, A.shape.p, A.shape.d, cg_tol=cfg.cg_tol) if cfg.record_tape else None
    p = A.shape.p
    z = np.zeros(p)
    u = np.zeros(p)
    b = np.zeros(p)
    eAty = eta * A.rmatvec(y)
    rel, converged, k = math.inf, False, 0
    for k in range(1, int(cfg.max_iter) + 1):
        b, cache = r.prox(z - u, eta)
        if tape is not None:
            tape.caches.append(cache)
        z_new = solve_spd(A, eta, b + u + eAty, tol=cfg.cg_tol, warm_start=z)
        u = u + b - z_new
        rel = max(_rel(b - z_new, z, k), _rel(z_new - z, z, k))
        z = z_new
        if rel <= cfg.tol:
            converged = True
            break
    return Solution(b, A.matvec(b), k, converged, rel, tape, eta)


SOLVERS = {"ista": ista_solve, "fista": fista_solve, "admm": admm_solve}


def solve(A, r, y, cfg):
    return SOLVERS[cfg.algorithm](A, r, y, cfg)


def vjp_solution(tape, A, r, u):
    """Apply ``(D beta_hat(y))*`` to the domain cotangent ``u``.

    ``u`` has shape ``(p,)`` or ``(p, k)``; the result lives in the space of
    ``y`` and has shape ``(d,)`` or ``(d, k)``.
    """
    if tape is None:
        raise TapeMismatchError("solution was computed without record_tape")
    if tape.p != A.shape.p or tape.d != A.shape.d:
        raise TapeMismatchError("tape was recorded for an operator of a different shape")
    u = np.asarray(u, dtype=float)
    if u.shape[0] != tape.p:
        raise TapeMismatchError(f"cotangent length {u.shape[0]} != {tape.p}")
    if tape.algorithm == "ista":
        return _ista_vjp(tape, A, r, u)
    if tape.algorithm == "fista":
        return _fista_vjp(tape, A, r, u)
    if tape.algorithm == "admm":
        return _admm_vjp(tape, A, r, u)
    raise TapeMismatchError(f"unknown tape algorithm {tape.algorithm!r}")


def _ista_vjp(tape, A, r, u):
    # b' = P(b - eta A*(A b - y)):  y-bar += eta A s,  b-bar = s - eta A*A s
    eta = tape.eta
    gy = np.zeros((tape.d,) + u.shape[1:])
    c = u
    for cache in reversed(tape.caches):
        s = r.vjp(c, cache)
        As = A.matvec(s)
        gy += eta * As
        c = s - eta * A.rmatvec(As)
    return gy


def _fista_vjp(tape, A, r, u):
    # a_k = (1 + w) b_k - w b_{k-1};  b_{k+1} = P(a_k - eta A*(A a_k - y))
    eta = tape.eta
    gy = np.zeros((tape.d,) + u.shape[1:])
    cur, prev = u, np.zeros_like(u)
    for cache, w in zip(reversed(tape.caches), reversed(tape.weights)):
        s = r.vjp(cur, cache)
        As = A.matvec(s)
        gy += eta * As
        t = s - eta * A.rmatvec(As)
        cur, prev = prev + (1.0 + w) * t, -w * t
    return gy


def _admm_vjp(tape, A, r, u):
    # forward step k:  b = P(z - u);  z' = M^{-1}(b + u + eta A* y);  u' = u + b - z'
    eta = tape.eta
    gy = np.zeros((tape.d,) + u.shape[1:])
    caches = tape.caches
    # the estimate is b of the last step, which only depends on (z, u) before it
    s = r.vjp(u, caches[-1])
    zbar, ubar = s, -s
    q = None
    for cache in reversed(caches[:-1]):
        q = solve_spd(A, eta, zbar - ubar, tol=tape.cg_tol, warm_start=q)
        gy += eta * A.matvec(q)
        s = r.vjp(ubar + q, cache)
        zbar, ubar = s, ubar + q - s
    return gy
