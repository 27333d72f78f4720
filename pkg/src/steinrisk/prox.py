"""Proximal operators paired with vector-Jacobian oracles.

Each oracle works on flat parameter vectors. ``prox(v, eta)`` returns
``argmin_b eta*r(b) + 0.5*||b - v||^2`` together with a cache; ``vjp(u, cache)``
applies the adjoint of the prox Jacobian at the cached point to a cotangent
``u`` of shape ``(p,)`` or ``(p, k)``.

Soft-threshold kinks are resolved to the below-threshold side: the
derivative of ``max(s - t, 0)`` is taken to be 1 only when ``s > t``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, NumericalError

# relative gap below which two singular values are treated as repeated
REPEATED_SV_RTOL = 1e-10


def soft_threshold(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _batched(mask, u):
    return mask * u if u.ndim == 1 else mask[:, None] * u


class ProxOracle:
    """Base class for regularizers accessed through their prox."""

    size = None  # number of flat entries the oracle requires, if fixed

    def prox(self, v, eta):
        raise NotImplementedError

    def vjp(self, u, cache):
        raise NotImplementedError

    def value(self, b):
        """Regularizer value ``r(b)`` (used for objectives in tests and reports)."""
        raise NotImplementedError

    def _check(self, v):
        if self.size is not None and v.shape[0] != self.size:
            raise DimensionError(f"{self!r} expects length {self.size}, got {v.shape[0]}")


class Zero(ProxOracle):
    """``r = 0``: the prox is the identity."""

    def prox(self, v, eta):
        return np.array(v, dtype=float), None

    def vjp(self, u, cache):
        return np.array(u, dtype=float)

    def value(self, b):
        return 0.0

    def __repr__(self):
        return "Zero()"


class L1(ProxOracle):
    """``r(b) = lam * ||b||_1``."""

    def __init__(self, lam):
        if lam < 0:
            raise ValueError("lam must be nonnegative")
        self.lam = float(lam)

    def prox(self, v, eta):
        t = eta * self.lam
        mask = np.abs(v) > t
        return soft_threshold(v, t), mask

    def vjp(self, u, mask):
        return _batched(mask.astype(float), u)

    def value(self, b):
        return self.lam * np.sum(np.abs(b))

    def __repr__(self):
        return f"L1(lam={self.lam})"


class ElasticNet(ProxOracle):
    """``r(b) = lam1 * ||b||_1 + lam2 * ||b||_2^2``.

    The prox is ``T_{eta*lam1}(v) / (1 + 2*eta*lam2)``.
    """

    def __init__(self, lam1, lam2):
        if lam1 < 0 or lam2 < 0:
            raise ValueError("penalties must be nonnegative")
        self.lam1 = float(lam1)
        self.lam2 = float(lam2)

    def prox(self, v, eta):
        t = eta * self.lam1
        scale = 1.0 / (1.0 + 2.0 * eta * self.lam2)
        mask = np.abs(v) > t
        return scale * soft_threshold(v, t), scale * mask

    def vjp(self, u, weights):
        return _batched(weights, u)

    def value(self, b):
        return self.lam1 * np.sum(np.abs(b)) + self.lam2 * np.sum(b**2)

    def __repr__(self):
        return f"ElasticNet(lam1={self.lam1}, lam2={self.lam2})"


@dataclass(frozen=True)
class SpectralCache:
    """Full SVD of a (possibly transposed so that m >= n) prox input."""

    U: np.ndarray  # (m, m)
    sigma: np.ndarray  # (n,), descending
    Vt: np.ndarray  # (n, n)
    threshold: float
    transposed: bool


class Nuclear(ProxOracle):
    """``r(B) = lam * ||B||_*`` for ``B`` of shape ``shape`` (row-major flat)."""

    def __init__(self, lam, shape):
        if lam < 0:
            raise ValueError("lam must be nonnegative")
        self.lam = float(lam)
        self.shape = (int(shape[0]), int(shape[1]))
        self.size = self.shape[0] * self.shape[1]

    def prox(self, v, eta):
        self._check(v)
        X = v.reshape(self.shape)
        transposed = X.shape[0] < X.shape[1]
        if transposed:
            X = X.T
        try:
            U, s, Vt = np.linalg.svd(X, full_matrices=True)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"SVD failed in nuclear prox ({X.shape}): {exc}") from exc
        t = eta * self.lam
        n = s.size
        out = (U[:, :n] * np.maximum(s - t, 0.0)) @ Vt
        if transposed:
            out = out.T
        return out.ravel(), SpectralCache(U, s, Vt, t, transposed)

    def vjp(self, u, cache):
        return nuclear_vjp(u, cache, self.shape)

    def value(self, b):
        return self.lam * np.sum(np.linalg.svd(np.reshape(b, self.shape), compute_uv=False))

    def __repr__(self):
        return f"Nuclear(lam={self.lam}, shape={self.shape})"


def _gamma_coefficients(s, t):
    """Weights ``(Q, T, R)`` such that ``Gamma = Q*zeta + T*zeta^T`` on the
    leading n x n block and ``Gamma_ij = R_j * zeta_ij`` on the remaining rows."""
    active = s > t
    deriv = active.astype(float)
    shrunk = np.maximum(s - t, 0.0)
    si, sj = s[:, None], s[None, :]
    ai, aj = active[:, None], active[None, :]
    denom = si**2 - sj**2
    safe = np.where(denom != 0.0, denom, 1.0)

    # distinct values; rewritten per activity pattern to avoid cancellation
    both = ai & aj
    only_i = ai & ~aj
    only_j = ~ai & aj
    sum_ = np.where(si + sj > 0, si + sj, 1.0)
    Q = np.where(both, 1.0 - t / sum_, 0.0)
    T = np.where(both, t / sum_, 0.0)
    Q = np.where(only_i, si * (si - t) / safe, Q)
    T = np.where(only_i, sj * (si - t) / safe, T)
    Q = np.where(only_j, sj * (sj - t) / -safe, Q)
    T = np.where(only_j, si * (sj - t) / -safe, T)

    # repeated singular values: limits of the distinct-value expressions
    scale = max(float(s[0]) if s.size else 0.0, 1.0)
    repeated = np.abs(si - sj) <= REPEATED_SV_RTOL * scale
    pos = np.broadcast_to(si > 0, repeated.shape)
    ratio = np.where(s > 0, shrunk / np.where(s > 0, s, 1.0), 0.0)
    Qrep = np.where(pos, 0.5 * deriv[:, None] + 0.5 * ratio[:, None], float(0.0 > t))
    Trep = np.where(pos, 0.5 * deriv[:, None] - 0.5 * ratio[:, None], 0.0)
    Q = np.where(repeated, Qrep, Q)
    T = np.where(repeated, Trep, T)

    np.fill_diagonal(Q, deriv)
    np.fill_diagonal(T, 0.0)
    R = np.where(s > 0, ratio, 0.0)
    return Q, T, R


def nuclear_vjp(u, cache, shape):
    """Continuous extension of ``(D prox(X))* Z`` evaluated as ``U Gamma V^T``.

    ``u`` is the flat cotangent (``(m*n,)`` or ``(m*n, k)``).
    """
    single = u.ndim == 1
    Z = u.reshape(shape + (1 if single else u.shape[1],))
    if cache.transposed:
        Z = Z.transpose(1, 0, 2)
    U, s, Vt = cache.U, cache.sigma, cache.Vt
    n = s.size
    Q, T, R = _gamma_coefficients(s, cache.threshold)
    # zeta[a, c, k] = sum_{m, b} U[m, a] Z[m, b, k] Vt[c, b]
    zeta = np.tensordot(np.tensordot(U, Z, axes=(0, 0)), Vt, axes=(1, 1)).transpose(0, 2, 1)
    top = zeta[:n]
    gamma = np.empty_like(zeta)
    gamma[:n] = Q[:, :, None] * top + T[:, :, None] * top.transpose(1, 0, 2)
    gamma[n:] = R[None, :, None] * zeta[n:]
    out = np.tensordot(np.tensordot(U, gamma, axes=(1, 0)), Vt, axes=(1, 0)).transpose(0, 2, 1)
    if cache.transposed:
        out = out.transpose(1, 0, 2)
    out = out.reshape(u.shape[0], -1)
    return out[:, 0] if single else out


class SeparablePair(ProxOracle):
    """``r(b1, b2) = left(b1) + right(b2)`` with ``b1`` the first ``split`` entries."""

    def __init__(self, left, right, split=None):
        if split is None:
            split = left.size
        if split is None:
            raise ValueError("split must be given when the left oracle has no fixed size")
        self.left = left
        self.right = right
        self.split = int(split)
        if right.size is not None:
            self.size = self.split + right.size

    def prox(self, v, eta):
        self._check(v)
        a, ca = self.left.prox(v[: self.split], eta)
        b, cb = self.right.prox(v[self.split:], eta)
        return np.concatenate([a, b]), (ca, cb)

    def vjp(self, u, cache):
        ca, cb = cache
        return np.concatenate(
            [self.left.vjp(u[: self.split], ca), self.right.vjp(u[self.split:], cb)], axis=0
        )

    def value(self, b):
        return self.left.value(b[: self.split]) + self.right.value(b[self.split:])

    def __repr__(self):
        return f"SeparablePair({self.left!r}, {self.right!r}, split={self.split})"


def _to_flat(v):
    if isinstance(v, (tuple, list)):
        parts = [np.asarray(x, dtype=float) for x in v]
        return np.concatenate([x.ravel() for x in parts]), [x.shape for x in parts]
    v = np.asarray(v, dtype=float)
    return v.ravel(), v.shape


def _from_flat(x, layout):
    if isinstance(layout, list):
        out, start = [], 0
        for shp in layout:
            size = int(np.prod(shp))
            out.append(x[start:start + size].reshape(shp))
            start += size
        return tuple(out)
    return x.reshape(layout)


def prox_eval(oracle, v, eta):
    """Evaluate ``prox_{eta r}(v)``; ``v`` may be flat, a matrix or a tuple of blocks.

    Returns ``(result, cache)`` with ``result`` in the same layout as ``v``.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    flat, layout = _to_flat(v)
    out, cache = oracle.prox(flat, eta)
    return _from_flat(out, layout), cache


def prox_vjp(oracle, v, eta, u, cache=None):
    """Apply ``(D prox_{eta r}(v))*`` to ``u``; recomputes the cache if not given."""
    flat_v, _ = _to_flat(v)
    if cache is None:
        _, cache = oracle.prox(flat_v, eta)
    flat_u, layout = _to_flat(u)
    return _from_flat(oracle.vjp(flat_u, cache), layout)
