"""Geometric multigrid with Galerkin coarse operators.

Coarse matrices are built as ``P A P^T`` where ``P`` has the rows
``1/2 [1 2 1]`` in 1D (tensor products of it in 2D), so ``P^T`` is linear
(bilinear) interpolation.  The cycle is a V(nu, 0) cycle: pre-smoothing only,
with the residual taken as ``A u - b`` and the coarse correction subtracted.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .linalg import BandedMatrix, lu_factor, lu_solve

logger = logging.getLogger(__name__)

DAMPED_JACOBI = "damped-jacobi"
RED_BLACK_GS = "red-black-gauss-seidel"

COARSEST_1D = 7
COARSEST_2D = 9


class MultigridError(ValueError):
    pass


def coarse_size(n: int, neumann_end: bool = False) -> int:
    """Number of coarse points for ``n`` fine points.

    ``2^k - 1`` maps to ``2^(k-1) - 1``; other sizes keep every other
    interior point, which is the same rule ``(n - 1) // 2``.  When the last
    fine point is a Neumann boundary node it is kept as well, giving
    ``n // 2``.
    """
    return n // 2 if neumann_end else (n - 1) // 2


def _projection_1d(n: int, neumann_end: bool = False) -> sp.csr_matrix:
    nc = coarse_size(n, neumann_end)
    if nc < 1:
        raise MultigridError(f"grid of {n} points is too small to coarsen")
    rows = np.repeat(np.arange(nc), 3)
    centers = 2 * np.arange(nc) + 1
    cols = (centers[:, None] + np.array([-1, 0, 1])).ravel()
    vals = np.tile([0.5, 1.0, 0.5], nc)
    keep = cols < n
    return sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(nc, n))


@dataclass(frozen=True)
class ProjectionOperator:
    """Restriction ``P`` (coarse x fine); ``P^T`` is the interpolation."""

    fine_shape: tuple
    coarse_shape: tuple
    matrix: sp.csr_matrix = field(repr=False)

    @property
    def fine_dim(self) -> int:
        return int(np.prod(self.fine_shape))

    @property
    def coarse_dim(self) -> int:
        return int(np.prod(self.coarse_shape))

    def restrict(self, v) -> np.ndarray:
        return self.matrix @ v

    def interpolate(self, y) -> np.ndarray:
        return self.matrix.T @ y

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()


def build_projection(fine_dim: int, dimensionality: int = 1,
                     neumann_end: bool = False) -> ProjectionOperator:
    """Full-weighting projection for a 1D line or a square 2D grid.

    ``fine_dim`` is the number of points per axis.  2D unknowns are ordered
    lexicographically with the first axis slowest.
    """
    p1 = _projection_1d(int(fine_dim), neumann_end)
    nc = p1.shape[0]
    if dimensionality == 1:
        return ProjectionOperator((fine_dim,), (nc,), p1)
    if dimensionality == 2:
        return ProjectionOperator((fine_dim, fine_dim), (nc, nc),
                                  sp.kron(p1, p1, format="csr"))
    raise MultigridError(f"unsupported dimensionality {dimensionality}")


def projection_for_shape(shape: Sequence[int], neumann_end: bool = False) -> ProjectionOperator:
    mats = [_projection_1d(n, neumann_end) for n in shape]
    p = mats[0]
    for m in mats[1:]:
        p = sp.kron(p, m, format="csr")
    return ProjectionOperator(tuple(shape), tuple(m.shape[0] for m in mats),
                              sp.csr_matrix(p))


def galerkin_coarsen(a: BandedMatrix, p: ProjectionOperator) -> BandedMatrix:
    """Coarse operator ``P A P^T``."""
    if a.order != p.fine_dim:
        raise MultigridError(
            f"dimension mismatch: matrix order {a.order}, projection fine dim {p.fine_dim}")
    coarse = p.matrix @ a.to_sparse() @ p.matrix.T
    out = BandedMatrix.from_sparse(coarse)
    if a.symmetric:
        # the sparse triple product may round the two triangles differently
        sym = [0.5 * (out.diagonal(k) + out.diagonal(-k)) for k in out.offsets]
        out = BandedMatrix(out.order, out.offsets, sym, symmetric=True)
    return out


@dataclass(frozen=True)
class SmootherSpec:
    kind: str = DAMPED_JACOBI
    omega: float = 2.0 / 3.0
    sweeps: int = 1

    def __post_init__(self):
        if self.kind not in (DAMPED_JACOBI, RED_BLACK_GS):
            raise MultigridError(f"unknown smoother {self.kind!r}")
        if not 0.0 < self.omega <= 1.0:
            raise MultigridError("damping must lie in (0, 1]")
        if self.sweeps < 1:
            raise MultigridError("at least one smoothing sweep is required")


def red_black_colors(shape: Sequence[int]) -> np.ndarray:
    """Boolean mask of "red" points (even index sum) in lexicographic order."""
    grids = np.meshgrid(*[np.arange(n) for n in shape], indexing="ij")
    return (sum(grids) % 2 == 0).ravel()


def smooth(a: BandedMatrix, x, b, spec: SmootherSpec,
           shape: Optional[Sequence[int]] = None) -> np.ndarray:
    """Apply ``spec.sweeps`` sweeps of the configured smoother.

    ``shape`` gives the grid layout used for the red-black colouring; a flat
    1D line is assumed when omitted.
    """
    d = a.diagonal(0)
    if np.any(d == 0):
        raise MultigridError("smoother needs a nonzero diagonal")
    x = np.array(x, dtype=float)
    b = np.asarray(b, dtype=float)
    if spec.kind == DAMPED_JACOBI:
        for _ in range(spec.sweeps):
            x += spec.omega * (b - a.matvec(x)) / d
        return x
    red = red_black_colors(shape if shape is not None else (a.order,))
    for _ in range(spec.sweeps):
        for mask in (red, ~red):
            r = b - a.matvec(x)
            x[mask] += spec.omega * r[mask] / d[mask]
    return x


@dataclass
class Level:
    matrix: BandedMatrix
    shape: tuple
    projection: Optional[ProjectionOperator] = None


class MultigridHierarchy:
    """Matrices and projections from the fine grid down to a dense coarsest level.

    Parameters
    ----------
    matrix : BandedMatrix
        Fine-level operator.
    shape : tuple of int
        Grid layout of the unknowns (``(n,)`` or ``(n, n)``).
    smoother : SmootherSpec
    coarsest : int, optional
        Stop coarsening once the level dimension is at most this; defaults to
        7 in 1D and 9 in 2D.
    neumann_end : bool
        The last point along every axis is a Neumann boundary node.
    """

    def __init__(self, matrix: BandedMatrix, shape: Sequence[int],
                 smoother: SmootherSpec = SmootherSpec(),
                 coarsest: Optional[int] = None, neumann_end: bool = False):
        shape = tuple(int(n) for n in shape)
        if int(np.prod(shape)) != matrix.order:
            raise MultigridError("grid shape does not match the matrix order")
        if coarsest is None:
            coarsest = COARSEST_1D if len(shape) == 1 else COARSEST_2D
        self.smoother = smoother
        self.coarsest = coarsest
        self.neumann_end = neumann_end
        self.levels: list[Level] = [Level(matrix, shape)]
        while (self.levels[-1].matrix.order > coarsest
               and min(coarse_size(n, neumann_end) for n in self.levels[-1].shape) >= 1):
            lev = self.levels[-1]
            lev.projection = projection_for_shape(lev.shape, neumann_end)
            self.levels.append(Level(galerkin_coarsen(lev.matrix, lev.projection),
                                     lev.projection.coarse_shape))
        self._coarse_lu = lu_factor(self.levels[-1].matrix.to_dense())

    @property
    def depth(self) -> int:
        """Index of the coarsest level."""
        return len(self.levels) - 1

    def sizes(self) -> list[int]:
        return [lev.matrix.order for lev in self.levels]

    def coarse_solve(self, b) -> np.ndarray:
        return lu_solve(self._coarse_lu, b)


def v_cycle(h: MultigridHierarchy, level: int, x_in, b) -> np.ndarray:
    """One V(nu, 0) cycle on ``level``; the coarsest level is solved exactly."""
    if not 0 <= level <= h.depth:
        raise MultigridError(f"level {level} outside [0, {h.depth}]")
    if level == h.depth:
        return h.coarse_solve(b)
    lev = h.levels[level]
    u = smooth(lev.matrix, x_in, b, h.smoother, lev.shape)
    r = lev.matrix.matvec(u) - b
    bc = lev.projection.restrict(r)
    y = v_cycle(h, level + 1, np.zeros(bc.size), bc)
    return u - lev.projection.interpolate(y)


def v_cycle_preconditioner(h: MultigridHierarchy):
    """Preconditioner applying one V-cycle from a zero initial guess."""
    n = h.levels[0].matrix.order

    def apply(r):
        return v_cycle(h, 0, np.zeros(n), r)

    return apply


def mgm_solve(h: MultigridHierarchy, b, x0=None, rtol: float = 1e-10,
              max_cycles: int = 100):
    """Repeat V-cycles until ``||b - A x|| <= rtol ||b - A x0||``.

    Returns ``(x, cycles)``.
    """
    a = h.levels[0].matrix
    b = np.asarray(b, dtype=float)
    x = np.zeros(a.order) if x0 is None else np.array(x0, dtype=float)
    r0 = np.linalg.norm(b - a.matvec(x))
    if r0 == 0.0:
        return x, 0
    for cycle in range(1, max_cycles + 1):
        x = v_cycle(h, 0, x, b)
        if np.linalg.norm(b - a.matvec(x)) <= rtol * r0:
            return x, cycle
    logger.debug("MGM stopped after %d cycles without reaching rtol=%g", max_cycles, rtol)
    return x, max_cycles


def mgm_preconditioner(h: MultigridHierarchy, rtol: float = 1e-10, max_cycles: int = 100):
    """Preconditioner that drives MGM to convergence; records cycle counts."""

    def apply(r):
        x, cycles = mgm_solve(h, r, rtol=rtol, max_cycles=max_cycles)
        apply.cycles.append(cycles)
        return x

    apply.cycles = []
    return apply
