"""Banded matrix storage, a dense LU fallback and full GMRES.

Vectors are plain one-dimensional ``numpy`` float arrays.  A
:class:`BandedMatrix` stores a square matrix as a set of diagonals at fixed
offsets, using the same layout as ``numpy.diagonal``: diagonal ``k`` holds
``A[j, j + k]`` for every valid row ``j``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_triangular

logger = logging.getLogger(__name__)


class LinearAlgebraError(RuntimeError):
    """Base class for failures raised by the solvers in this module."""


class SingularMatrixError(LinearAlgebraError):
    pass


class GMRESBreakdown(LinearAlgebraError):
    pass


def _as_vector(x, name="x") -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {v.shape}")
    return v


class BandedMatrix:
    """Square matrix stored as diagonals at fixed offsets.

    Parameters
    ----------
    order : int
        Matrix dimension ``N``.
    offsets : sequence of int
        Diagonal offsets; stored sorted and unique.
    diagonals : sequence of array_like
        One array per offset, of length ``order - abs(offset)``.
    symmetric : bool
        If set, symmetry is verified on construction.
    """

    def __init__(self, order: int, offsets: Sequence[int], diagonals: Sequence,
                 symmetric: bool = False):
        order = int(order)
        if order < 1:
            raise ValueError("order must be positive")
        offsets = [int(k) for k in offsets]
        if len(set(offsets)) != len(offsets):
            raise ValueError(f"duplicate diagonal offsets: {offsets}")
        if len(offsets) != len(diagonals):
            raise ValueError("one diagonal is required per offset")
        pairs = sorted(zip(offsets, diagonals), key=lambda p: p[0])
        self.order = order
        self.offsets: tuple[int, ...] = tuple(k for k, _ in pairs)
        self.diagonals: tuple[np.ndarray, ...] = tuple(
            np.array(d, dtype=float) for _, d in pairs)
        for k, d in zip(self.offsets, self.diagonals):
            if abs(k) >= order:
                raise ValueError(f"offset {k} out of range for order {order}")
            if d.shape != (order - abs(k),):
                raise ValueError(
                    f"diagonal at offset {k} must have {order - abs(k)} entries, "
                    f"got {d.shape}")
        self.symmetric = bool(symmetric)
        if self.symmetric and not self.is_symmetric():
            raise ValueError("matrix flagged symmetric is not symmetric")

    # construction -------------------------------------------------------

    @classmethod
    def identity(cls, order: int) -> "BandedMatrix":
        return cls(order, [0], [np.ones(order)], symmetric=True)

    @classmethod
    def diag(cls, values) -> "BandedMatrix":
        v = _as_vector(values, "values")
        return cls(v.size, [0], [v])

    @classmethod
    def tridiag(cls, lower, main, upper) -> "BandedMatrix":
        """Tridiagonal matrix; ``lower[i] = A[i+1, i]``, ``upper[i] = A[i, i+1]``."""
        main = _as_vector(main, "main")
        return cls(main.size, [-1, 0, 1], [lower, main, upper])

    @classmethod
    def from_dense(cls, a, tol: float = 0.0) -> "BandedMatrix":
        a = np.asarray(a, dtype=float)
        n = a.shape[0]
        if a.shape != (n, n):
            raise ValueError("dense matrix must be square")
        offsets, diagonals = [], []
        for k in range(-n + 1, n):
            d = np.diagonal(a, k)
            if np.any(np.abs(d) > tol):
                offsets.append(k)
                diagonals.append(d.copy())
        if not offsets:
            offsets, diagonals = [0], [np.zeros(n)]
        return cls(n, offsets, diagonals)

    @classmethod
    def from_sparse(cls, m) -> "BandedMatrix":
        """Convert a scipy sparse matrix, keeping every structurally present diagonal."""
        m = sp.coo_matrix(m)
        n = m.shape[0]
        if m.shape != (n, n):
            raise ValueError("sparse matrix must be square")
        m.sum_duplicates()
        ks = np.unique(m.col - m.row) if m.nnz else np.array([0])
        diagonals = []
        for k in ks:
            d = np.zeros(n - abs(k))
            sel = (m.col - m.row) == k
            rows = m.row[sel]
            idx = rows if k >= 0 else rows + k
            np.add.at(d, idx, m.data[sel])
            diagonals.append(d)
        return cls(n, ks.tolist(), diagonals)

    # conversion ---------------------------------------------------------

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.order, self.order))
        for k, d in zip(self.offsets, self.diagonals):
            if k >= 0:
                idx = np.arange(d.size)
                a[idx, idx + k] = d
            else:
                idx = np.arange(d.size)
                a[idx - k, idx] = d
        return a

    def to_sparse(self) -> sp.csr_matrix:
        n = self.order
        data = np.zeros((len(self.offsets), n))
        for i, (k, d) in enumerate(zip(self.offsets, self.diagonals)):
            # dia_matrix aligns data by column index
            if k >= 0:
                data[i, k:] = d
            else:
                data[i, :n + k] = d
        return sp.dia_matrix((data, np.array(self.offsets)), shape=(n, n)).tocsr()

    # queries ------------------------------------------------------------

    def diagonal(self, k: int = 0) -> np.ndarray:
        if k in self.offsets:
            return self.diagonals[self.offsets.index(k)].copy()
        return np.zeros(self.order - abs(k))

    def is_symmetric(self, tol: float = 0.0) -> bool:
        for k, d in zip(self.offsets, self.diagonals):
            other = self.diagonal(-k)
            if np.any(np.abs(d - other) > tol):
                return False
        return True

    def transpose(self) -> "BandedMatrix":
        return BandedMatrix(self.order, [-k for k in self.offsets], self.diagonals)

    @property
    def T(self) -> "BandedMatrix":
        return self.transpose()

    @property
    def shape(self) -> tuple[int, int]:
        return (self.order, self.order)

    def matvec(self, x) -> np.ndarray:
        return banded_matvec(self, x)

    def as_operator(self) -> "LinearOperator":
        return LinearOperator(self.order, self.matvec)

    # arithmetic ---------------------------------------------------------

    def __matmul__(self, x):
        return banded_matvec(self, x)

    def __add__(self, other: "BandedMatrix") -> "BandedMatrix":
        if not isinstance(other, BandedMatrix):
            return NotImplemented
        if other.order != self.order:
            raise ValueError("order mismatch")
        ks = sorted(set(self.offsets) | set(other.offsets))
        return BandedMatrix(self.order, ks,
                            [self.diagonal(k) + other.diagonal(k) for k in ks])

    def __neg__(self) -> "BandedMatrix":
        return BandedMatrix(self.order, self.offsets, [-d for d in self.diagonals],
                            symmetric=self.symmetric)

    def __sub__(self, other: "BandedMatrix") -> "BandedMatrix":
        return self + (-other)

    def __mul__(self, alpha: float) -> "BandedMatrix":
        if not np.isscalar(alpha):
            return NotImplemented
        return BandedMatrix(self.order, self.offsets,
                            [alpha * d for d in self.diagonals],
                            symmetric=self.symmetric)

    __rmul__ = __mul__

    def scale_columns(self, w) -> "BandedMatrix":
        """Return ``A @ diag(w)``."""
        w = _as_vector(w, "w")
        out = []
        for k, d in zip(self.offsets, self.diagonals):
            out.append(d * (w[k:] if k >= 0 else w[:self.order + k]))
        return BandedMatrix(self.order, self.offsets, out)

    def scale_rows(self, w) -> "BandedMatrix":
        """Return ``diag(w) @ A``."""
        w = _as_vector(w, "w")
        out = []
        for k, d in zip(self.offsets, self.diagonals):
            out.append(d * (w[:self.order - k] if k >= 0 else w[-k:]))
        return BandedMatrix(self.order, self.offsets, out)

    def __repr__(self) -> str:
        return f"BandedMatrix(order={self.order}, offsets={list(self.offsets)})"


def banded_matvec(a: BandedMatrix, x) -> np.ndarray:
    """Product ``A @ x`` in ``O(order * len(offsets))`` work."""
    x = _as_vector(x)
    n = a.order
    if x.size != n:
        raise ValueError(f"dimension mismatch: matrix order {n}, vector length {x.size}")
    y = np.zeros(n)
    for k, d in zip(a.offsets, a.diagonals):
        if k >= 0:
            y[:n - k] += d * x[k:]
        else:
            y[-k:] += d * x[:n + k]
    return y


@dataclass(frozen=True)
class LinearOperator:
    """A square linear map given only through its action."""

    dimension: int
    apply: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x):
        return self.apply(x)

    def __matmul__(self, x):
        return self.apply(x)


Operator = Union[BandedMatrix, LinearOperator, np.ndarray, Callable]
Preconditioner = Callable[[np.ndarray], np.ndarray]


def _operator_fn(a) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(a, BandedMatrix):
        return a.matvec
    if isinstance(a, LinearOperator):
        return a.apply
    if isinstance(a, np.ndarray):
        return lambda x: a @ x
    if sp.issparse(a):
        return lambda x: a @ x
    if callable(a):
        return a
    raise TypeError(f"cannot use {type(a).__name__} as a linear operator")


# -- dense LU ---------------------------------------------------------------

def lu_factor(a, pivot_tol: float = None):
    """LU factorisation with partial pivoting.

    Returns ``(lu, perm)`` with unit-lower and upper factors packed in ``lu``
    and ``perm`` the row permutation.  Raises :class:`SingularMatrixError`
    when a pivot is negligible relative to the matrix scale.
    """
    lu = np.array(a, dtype=float)
    n = lu.shape[0]
    if lu.shape != (n, n):
        raise ValueError("matrix must be square")
    if pivot_tol is None:
        pivot_tol = n * np.finfo(float).eps
    scale = np.max(np.abs(lu)) if lu.size else 0.0
    if scale == 0.0:
        raise SingularMatrixError("zero matrix")
    perm = np.arange(n)
    for j in range(n):
        p = j + int(np.argmax(np.abs(lu[j:, j])))
        if abs(lu[p, j]) <= pivot_tol * scale:
            raise SingularMatrixError(f"singular pivot in column {j}")
        if p != j:
            lu[[j, p]] = lu[[p, j]]
            perm[[j, p]] = perm[[p, j]]
        lu[j + 1:, j] /= lu[j, j]
        lu[j + 1:, j + 1:] -= np.outer(lu[j + 1:, j], lu[j, j + 1:])
    return lu, perm


def lu_solve(factors, b) -> np.ndarray:
    lu, perm = factors
    y = _as_vector(b, "b")[perm].copy()
    n = y.size
    for i in range(1, n):
        y[i] -= lu[i, :i] @ y[:i]
    for i in range(n - 1, -1, -1):
        y[i] = (y[i] - lu[i, i + 1:] @ y[i + 1:]) / lu[i, i]
    return y


def dense_solve(a, b) -> np.ndarray:
    """Solve ``A x = b`` by LU with partial pivoting."""
    if isinstance(a, BandedMatrix):
        a = a.to_dense()
    a = np.asarray(a, dtype=float)
    b = _as_vector(b, "b")
    if a.shape != (b.size, b.size):
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.size}")
    return lu_solve(lu_factor(a), b)


# -- GMRES ------------------------------------------------------------------

@dataclass
class KrylovReport:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    converged: bool = False


@dataclass(frozen=True)
class GMRESConfig:
    """Linear-solve settings used inside Newton iterations.

    The default relative tolerance equals the Newton increment tolerance, so
    each linear solve is at least as accurate as the nonlinear stopping test.
    """

    rtol: float = 1e-6
    max_iter: Optional[int] = None

    def __post_init__(self):
        if not self.rtol > 0:
            raise ValueError("rtol must be positive")


REORTH_THRESHOLD = 1e-8


def gmres(a: Operator, b, x0=None, M: Optional[Preconditioner] = None,
          rtol: float = 1e-8, max_iter: Optional[int] = None):
    """Full (non-restarted) GMRES with left preconditioning.

    Minimises ``||M (b - A x)||`` over the Krylov space of ``M A``.  The
    Arnoldi basis uses modified Gram-Schmidt with a second pass whenever the
    new vector keeps a component larger than ``REORTH_THRESHOLD`` along the
    existing basis.

    Returns
    -------
    x : ndarray
    report : KrylovReport
        ``residual_history`` holds the preconditioned residual norms, starting
        with the initial one.
    """
    if not rtol > 0:
        raise ValueError("rtol must be positive")
    apply_a = _operator_fn(a)
    b = _as_vector(b, "b")
    n = b.size
    x = np.zeros(n) if x0 is None else _as_vector(x0, "x0").copy()
    if x.size != n:
        raise ValueError("x0 and b dimensions differ")
    prec = (lambda v: v) if M is None else M
    if max_iter is None:
        max_iter = n
    max_iter = int(max_iter)

    r = prec(b - apply_a(x))
    beta = float(np.linalg.norm(r))
    report = KrylovReport(residual_history=[beta])
    if not np.isfinite(beta):
        raise LinearAlgebraError("non-finite initial residual")
    if beta == 0.0:
        report.converged = True
        return x, report
    target = rtol * beta

    m = min(max_iter, n)
    V = np.zeros((m + 1, n))
    H = np.zeros((m + 1, m))
    cs = np.zeros(m)
    sn = np.zeros(m)
    g = np.zeros(m + 1)
    g[0] = beta
    V[0] = r / beta
    k = 0
    breakdown = False
    for j in range(m):
        w = prec(apply_a(V[j]))
        for i in range(j + 1):
            H[i, j] = V[i] @ w
            w -= H[i, j] * V[i]
        hnext = np.linalg.norm(w)
        if hnext > 0 and np.max(np.abs(V[:j + 1] @ w)) > REORTH_THRESHOLD * hnext:
            corr = V[:j + 1] @ w
            w -= corr @ V[:j + 1]
            H[:j + 1, j] += corr
            hnext = np.linalg.norm(w)
        H[j + 1, j] = hnext
        for i in range(j):
            t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
            H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
            H[i, j] = t
        denom = np.hypot(H[j, j], H[j + 1, j])
        if denom == 0.0:
            # singular Hessenberg: the Krylov space stopped growing without a solution
            breakdown = True
            break
        cs[j] = H[j, j] / denom
        sn[j] = H[j + 1, j] / denom
        H[j, j] = denom
        H[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]
        k = j + 1
        res = abs(g[j + 1])
        report.residual_history.append(res)
        if res <= target:
            break
        if hnext == 0.0:
            breakdown = True
            break
        V[j + 1] = w / hnext

    if k > 0:
        y = solve_triangular(H[:k, :k], g[:k])
        x = x + y @ V[:k]
    report.iterations = k
    res = report.residual_history[-1]
    report.converged = res <= target
    if not np.all(np.isfinite(x)):
        raise LinearAlgebraError("GMRES produced non-finite iterate")
    if breakdown and not report.converged:
        raise GMRESBreakdown(
            f"Arnoldi breakdown after {k} iterations with residual {res:.3e}")
    return x, report
