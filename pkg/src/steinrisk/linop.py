"""Matrix-free linear operators with forward and adjoint oracles.

Every operator maps a parameter space ``B`` to ``R^d``. ``B`` may be a
vector space, a matrix space or a tuple of matrices (robust PCA). It is
identified with ``R^p`` by concatenating the row-major flattenings of its
blocks in order, and all numerical routines work on that flat form. The
flat methods ``matvec``/``rmatvec`` also accept a trailing batch axis,
i.e. arrays of shape ``(p, k)`` / ``(d, k)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from math import prod

import numpy as np

from .exceptions import ConvergenceError, ConvergenceWarning, DimensionError


@dataclass(frozen=True)
class Shape:
    """Domain block shapes and codomain dimension of an operator."""

    domain_dims: tuple
    codomain_dim: int

    def __post_init__(self):
        dims = tuple(tuple(int(n) for n in block) for block in self.domain_dims)
        object.__setattr__(self, "domain_dims", dims)
        if not dims or any(n <= 0 for block in dims for n in block):
            raise DimensionError(f"invalid domain dims {dims}")
        if self.codomain_dim <= 0:
            raise DimensionError(f"invalid codomain dim {self.codomain_dim}")

    @property
    def p(self):
        return sum(prod(block) for block in self.domain_dims)

    @property
    def d(self):
        return self.codomain_dim


class LinearOp:
    """Base class. Subclasses implement ``_matvec`` and ``_rmatvec``."""

    gram_is_diagonal = False

    def __init__(self, shape: Shape):
        self.shape = shape

    # -- flat oracles -------------------------------------------------------
    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim not in (1, 2) or x.shape[0] != self.shape.p:
            raise DimensionError(
                f"expected domain vector of length {self.shape.p}, got shape {x.shape}"
            )
        return self._matvec(x)

    def rmatvec(self, v):
        v = np.asarray(v, dtype=float)
        if v.ndim not in (1, 2) or v.shape[0] != self.shape.d:
            raise DimensionError(
                f"expected codomain vector of length {self.shape.d}, got shape {v.shape}"
            )
        return self._rmatvec(v)

    def gram_diagonal(self):
        """Diagonal of ``A* A`` as a flat vector (only when it is diagonal)."""
        raise NotImplementedError(f"{type(self).__name__} has no diagonal Gram matrix")

    # -- structured <-> flat ------------------------------------------------
    def flatten(self, b):
        """Convert a domain element (array or tuple of arrays) to flat form."""
        dims = self.shape.domain_dims
        if isinstance(b, (tuple, list)) and len(dims) > 1:
            if len(b) != len(dims):
                raise DimensionError(f"expected {len(dims)} blocks, got {len(b)}")
            parts = []
            for block, dim in zip(b, dims):
                block = np.asarray(block, dtype=float)
                if block.shape != dim:
                    raise DimensionError(f"block shape {block.shape} != {dim}")
                parts.append(block.ravel())
            return np.concatenate(parts)
        b = np.asarray(b, dtype=float)
        if len(dims) == 1 and b.shape == dims[0]:
            return b.ravel()
        if b.shape == (self.shape.p,):
            return b
        raise DimensionError(f"array of shape {b.shape} does not conform to {dims}")

    def unflatten(self, x):
        """Inverse of :meth:`flatten`: a single array or a tuple of blocks."""
        x = np.asarray(x)
        if x.shape[0] != self.shape.p:
            raise DimensionError(f"expected length {self.shape.p}, got {x.shape[0]}")
        blocks, start = [], 0
        for dim in self.shape.domain_dims:
            size = prod(dim)
            blocks.append(x[start:start + size].reshape(dim + x.shape[1:]))
            start += size
        return blocks[0] if len(blocks) == 1 else tuple(blocks)

    # -- algebra ------------------------------------------------------------
    def __mul__(self, c):
        return ScaledOp(self, c)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return ComposedOp(self, other)

    def __repr__(self):
        return f"{type(self).__name__}(p={self.shape.p}, d={self.shape.d})"


class DenseOp(LinearOp):
    """Explicit ``d x p`` matrix acting on vectors."""

    def __init__(self, matrix):
        matrix = np.array(matrix, dtype=float)
        if matrix.ndim != 2:
            raise DimensionError("dense operator needs a 2-D matrix")
        matrix.setflags(write=False)
        self.matrix = matrix
        super().__init__(Shape(((matrix.shape[1],),), matrix.shape[0]))

    def _matvec(self, x):
        return self.matrix @ x

    def _rmatvec(self, v):
        return self.matrix.T @ v


class SelectionOp(LinearOp):
    """Selects entries of a parameter with the given block shape.

    ``indices`` are either flat row-major indices or coordinate tuples,
    e.g. ``[(0, 0), (1, 1)]`` for a 2-D parameter.  The adjoint scatters a
    codomain vector into the observed positions and fills the rest with 0.
    """

    gram_is_diagonal = True

    def __init__(self, domain_shape, indices):
        domain_shape = tuple(int(n) for n in np.atleast_1d(domain_shape))
        idx = np.asarray(indices)
        if idx.ndim == 2:
            if idx.shape[1] != len(domain_shape):
                raise DimensionError("coordinate indices do not match domain shape")
            idx = np.ravel_multi_index(tuple(idx.T), domain_shape)
        idx = np.asarray(idx, dtype=np.intp).ravel()
        p = prod(domain_shape)
        if idx.size == 0 or idx.min() < 0 or idx.max() >= p:
            raise DimensionError("selection indices out of range")
        if np.unique(idx).size != idx.size:
            raise DimensionError("selection indices must be distinct")
        idx.setflags(write=False)
        self.indices = idx
        super().__init__(Shape((domain_shape,), idx.size))

    def _matvec(self, x):
        return x[self.indices]

    def _rmatvec(self, v):
        out = np.zeros((self.shape.p,) + v.shape[1:])
        out[self.indices] = v
        return out

    def gram_diagonal(self):
        diag = np.zeros(self.shape.p)
        diag[self.indices] = 1.0
        return diag


class SumPairOp(LinearOp):
    """``(L, S) -> L + S`` for two blocks of the same shape; adjoint ``V -> (V, V)``."""

    def __init__(self, block_shape):
        block_shape = tuple(int(n) for n in np.atleast_1d(block_shape))
        self._q = prod(block_shape)
        super().__init__(Shape((block_shape, block_shape), self._q))

    def _matvec(self, x):
        return x[: self._q] + x[self._q:]

    def _rmatvec(self, v):
        return np.concatenate([v, v], axis=0)


class IdentityOp(LinearOp):
    gram_is_diagonal = True

    def __init__(self, domain_shape):
        domain_shape = tuple(int(n) for n in np.atleast_1d(domain_shape))
        super().__init__(Shape((domain_shape,), prod(domain_shape)))

    def _matvec(self, x):
        return x.copy()

    def _rmatvec(self, v):
        return v.copy()

    def gram_diagonal(self):
        return np.ones(self.shape.p)


class ScaledOp(LinearOp):
    """``c * A``."""

    def __init__(self, op, c):
        self.op = op
        self.c = float(c)
        self.gram_is_diagonal = op.gram_is_diagonal
        super().__init__(op.shape)

    def _matvec(self, x):
        return self.c * self.op._matvec(x)

    def _rmatvec(self, v):
        return self.c * self.op._rmatvec(v)

    def gram_diagonal(self):
        return self.c**2 * self.op.gram_diagonal()


class ComposedOp(LinearOp):
    """``outer @ inner``: apply ``inner`` first; ``outer`` must act on ``R^d_inner``."""

    def __init__(self, outer, inner):
        if outer.shape.p != inner.shape.d or len(outer.shape.domain_dims) != 1:
            raise DimensionError("cannot compose operators with mismatched shapes")
        self.outer = outer
        self.inner = inner
        super().__init__(Shape(inner.shape.domain_dims, outer.shape.d))

    def _matvec(self, x):
        return self.outer._matvec(self.inner._matvec(x))

    def _rmatvec(self, v):
        return self.inner._rmatvec(self.outer._rmatvec(v))


def apply(op, b):
    """Return ``A b`` for a domain element ``b`` (structured or flat)."""
    return op.matvec(op.flatten(b))


def apply_adjoint(op, v):
    """Return ``A* v`` as a structured domain element."""
    return op.unflatten(op.rmatvec(v))


def op_norm(op, tol=1e-7, max_iter=200, seed=0, return_info=False):
    """Largest singular value of ``op`` by power iteration on ``A* A``.

    Emits :class:`ConvergenceWarning` (and still returns the best estimate)
    if the relative change does not drop below ``tol`` in ``max_iter`` steps.
    """
    if tol <= 0 or max_iter < 1:
        raise ValueError("tol must be > 0 and max_iter >= 1")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.shape.p)
    x /= np.linalg.norm(x)
    estimate, converged = 0.0, False
    for _ in range(max_iter):
        w = op.rmatvec(op.matvec(x))
        lam = np.linalg.norm(w)
        if lam == 0.0:
            estimate, converged = 0.0, True
            break
        x = w / lam
        new = np.sqrt(lam)
        if abs(new - estimate) <= tol * new:
            estimate, converged = new, True
            break
        estimate = new
    if not converged:
        warnings.warn(
            f"power iteration stopped after {max_iter} steps; estimate {estimate:.6g}",
            ConvergenceWarning,
            stacklevel=2,
        )
    return (estimate, converged) if return_info else estimate


def solve_spd(op, eta, rhs, tol=1e-10, max_iter=None, warm_start=None, jacobi=False):
    """Solve ``(eta A* A + I) x = rhs`` for flat ``rhs`` of shape ``(p,)`` or ``(p, k)``.

    Operators with a diagonal Gram matrix are inverted exactly; otherwise a
    (column-wise vectorised) conjugate gradient is run until every column has
    ``||residual|| <= tol * ||rhs||``.

    Raises
    ------
    ConvergenceError
        If CG does not reach the residual target in ``max_iter`` iterations.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != op.shape.p:
        raise DimensionError(f"rhs length {rhs.shape[0]} != {op.shape.p}")
    if op.gram_is_diagonal:
        diag = 1.0 + eta * op.gram_diagonal()
        return rhs / (diag if rhs.ndim == 1 else diag[:, None])

    if max_iter is None:
        max_iter = 10 * op.shape.p

    def mv(z):
        return eta * op.rmatvec(op.matvec(z)) + z

    precond = None
    if jacobi:
        # diag(A*A) from columns; only affordable for explicit matrices
        if not isinstance(op, DenseOp):
            raise ValueError("Jacobi scaling needs an explicit matrix")
        # column vector: _cg works on (p, k) blocks
        precond = 1.0 / (1.0 + eta * np.sum(op.matrix**2, axis=0))[:, None]
    return _cg(mv, rhs, tol, max_iter, warm_start, precond)


def _cg(mv, rhs, tol, max_iter, x0, precond):
    single = rhs.ndim == 1
    b = rhs[:, None] if single else rhs
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float).reshape(b.shape)
    bnorm = np.linalg.norm(b, axis=0)
    target = tol * bnorm
    r = b - mv(x) if x0 is not None else b.copy()
    rnorm = np.linalg.norm(r, axis=0)
    if np.all(rnorm <= target):
        return x[:, 0] if single else x
    z = r * precond if precond is not None else r
    p = z.copy()
    rz = np.sum(r * z, axis=0)
    for _ in range(max_iter):
        active = rnorm > target
        Ap = mv(p)
        pAp = np.sum(p * Ap, axis=0)
        alpha = np.where(active & (pAp > 0), rz / np.where(pAp > 0, pAp, 1.0), 0.0)
        x += alpha * p
        r -= alpha * Ap
        rnorm = np.linalg.norm(r, axis=0)
        if np.all(rnorm <= target):
            return x[:, 0] if single else x
        z = r * precond if precond is not None else r
        rz_new = np.sum(r * z, axis=0)
        beta = np.where(rz > 0, rz_new / np.where(rz > 0, rz, 1.0), 0.0)
        p = z + beta * p
        rz = rz_new
    rel = float(np.max(rnorm / np.where(bnorm > 0, bnorm, 1.0)))
    raise ConvergenceError(
        f"conjugate gradient did not converge in {max_iter} iterations "
        f"(relative residual {rel:.3e})",
        residual=rel,
    )
