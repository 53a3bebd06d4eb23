"""Marble sulfation model on staggered grids.

Unknowns are the SO2 concentration ``s`` on the integer grid (nodes) and the
carbonate concentration ``c`` on the half-integer grid (cells).  The outer
faces (low end of every axis) carry a Dirichlet condition written through the
"porous concentration" ``phi * s = rho_s0``; the inner faces (high end) are
free-flow, closed by mirroring ``s_{N+1} = s_{N-1}`` and
``phi_{N+1/2} = phi_{N-1/2}``.

Per-axis building blocks are assembled with scipy.sparse and combined with
Kronecker products, so the same code covers 1D and 2D.  The resulting blocks
are stored as :class:`BandedMatrix`.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property, reduce
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .linalg import BandedMatrix, GMRESConfig, LinearOperator, lu_factor, lu_solve
from .multigrid import (DAMPED_JACOBI, RED_BLACK_GS, MultigridHierarchy, SmootherSpec,
                        mgm_solve, v_cycle)
from .newton import (SolverError, NewtonConfig, NewtonConvergenceError, NonlinearProblem,
                     newton_solve)
from .porous import CRANK_NICHOLSON, IMPLICIT_EULER, scheme_weight
from .records import RunRecord

logger = logging.getLogger(__name__)

ONE_V_CYCLE = "one-v-cycle"
MGM_TO_CONVERGENCE = "mgm-to-convergence"
EXACT = "exact"
INNER_SOLVERS = (ONE_V_CYCLE, MGM_TO_CONVERGENCE, EXACT)

BLOCK_TRIANGULAR = "block-triangular"
NO_PRECONDITIONER = "none"


class NoFrontError(ValueError):
    """The carbonate field has no gradient, so there is no front to locate."""


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class SulfationParams:
    """Model constants; ``phi(c) = alpha c + beta``."""

    a: float = 1.0
    d: float = 1.0
    m_c: float = 100.09
    m_s: float = 64.06
    alpha: float = 0.01
    beta: float = 0.1
    c0: float = 1.0
    rho_s0: float = 1.0

    def __post_init__(self):
        if self.a < 0:
            raise ValueError("reaction rate a must be non-negative")
        if self.d < 0:
            raise ValueError("diffusivity d must be non-negative")
        if not (self.m_c > 0 and self.m_s > 0):
            raise ValueError("molar masses must be positive")


def porosity(c, params: SulfationParams):
    return params.alpha * np.asarray(c, dtype=float) + params.beta


def porosity_prime(params: SulfationParams) -> float:
    return params.alpha


# -- grid -----------------------------------------------------------------

def _node_cell_average(n_cells: int, low_dirichlet: bool) -> sp.csr_matrix:
    """Average of the (up to) two cells touching each node, mirrored at free ends."""
    first = 1 if low_dirichlet else 0
    nodes = np.arange(first, n_cells + 1)
    rows, cols = [], []
    for r, k in enumerate(nodes):
        for cell in (k - 1, k):
            rows.append(r)
            cols.append(min(max(cell, 0), n_cells - 1))
    return sp.csr_matrix((np.full(len(rows), 0.5), (rows, cols)),
                         shape=(len(nodes), n_cells))


def _cell_corner_average(n_cells: int, low_dirichlet: bool) -> sp.csr_matrix:
    """Average of the two end nodes of each cell; Dirichlet nodes are dropped."""
    first = 1 if low_dirichlet else 0
    rows, cols = [], []
    for i in range(n_cells):
        for node in (i, i + 1):
            if node >= first:
                rows.append(i)
                cols.append(node - first)
    return sp.csr_matrix((np.full(len(rows), 0.5), (rows, cols)),
                         shape=(n_cells, n_cells + 1 - first))


def _edge_difference(n_cells: int, low_dirichlet: bool):
    """Edge differences along one axis.

    Edge ``k`` joins nodes ``k`` and ``k+1`` and sits on cell ``k``.  Returns
    ``(G, K, W, dirichlet)``: ``(G s)_k = s_{k+1} - s_k`` (the Dirichlet node
    contributes nothing), ``K`` picks the cell of each edge, ``W`` doubles the
    flux at mirrored ends and ``dirichlet`` flags nodes next to a Dirichlet node.
    """
    first = 1 if low_dirichlet else 0
    n_nodes = n_cells + 1 - first
    G = sp.lil_matrix((n_cells, n_nodes))
    for k in range(n_cells):
        G[k, k + 1 - first] = 1.0
        if k >= first:
            G[k, k - first] = -1.0
    K = sp.identity(n_cells, format="csr")
    w = np.ones(n_nodes)
    w[-1] = 2.0
    if not low_dirichlet:
        w[0] = 2.0
    dirichlet = np.zeros(n_nodes)
    if low_dirichlet:
        dirichlet[0] = 1.0
    return G.tocsr(), K, w, dirichlet


def _kron_all(mats) -> sp.csr_matrix:
    return sp.csr_matrix(reduce(lambda x, y: sp.kron(x, y, format="csr"), mats))


@dataclass(frozen=True)
class StaggeredGrid:
    """Square staggered grid on ``[0, L]^dim`` with ``N`` cells per axis.

    ``dirichlet_axes`` lists the axes whose low end is an outer (Dirichlet)
    face; by default every axis.  On an axis without it the low end is a
    mirrored free-flow face and node 0 becomes an unknown.  Unknowns are
    ordered lexicographically with the first axis slowest.
    """

    N: int
    dim: int = 1
    L: float = 1.0
    dirichlet_axes: Optional[tuple] = None

    def __post_init__(self):
        if self.N < 3:
            raise ValueError("a staggered grid needs at least 3 cells per axis")
        if self.dim not in (1, 2):
            raise ValueError("only 1D and 2D grids are supported")
        if not self.L > 0:
            raise ValueError("domain length must be positive")
        if self.dirichlet_axes is None:
            object.__setattr__(self, "dirichlet_axes", tuple(range(self.dim)))
        else:
            axes = tuple(sorted(set(int(a) for a in self.dirichlet_axes)))
            if any(a < 0 or a >= self.dim for a in axes):
                raise ValueError(f"dirichlet axes {axes} outside 0..{self.dim - 1}")
            object.__setattr__(self, "dirichlet_axes", axes)

    @property
    def h(self) -> float:
        return self.L / self.N

    def _low_dirichlet(self, axis: int) -> bool:
        return axis in self.dirichlet_axes

    @property
    def s_shape(self) -> tuple:
        return tuple(self.N + (0 if self._low_dirichlet(a) else 1) for a in range(self.dim))

    @property
    def c_shape(self) -> tuple:
        return (self.N,) * self.dim

    @property
    def n_s(self) -> int:
        return int(np.prod(self.s_shape))

    @property
    def n_c(self) -> int:
        return int(np.prod(self.c_shape))

    def node_coordinates(self, axis: int = 0) -> np.ndarray:
        first = 1 if self._low_dirichlet(axis) else 0
        return self.h * np.arange(first, self.N + 1)

    def cell_coordinates(self) -> np.ndarray:
        return self.h * (np.arange(self.N) + 0.5)

    @cached_property
    def operators(self) -> "_GridOperators":
        return _GridOperators.build(self)


@dataclass(frozen=True)
class _GridOperators:
    node_from_cells: sp.csr_matrix      # Phi = M_nc phi
    cell_from_nodes: sp.csr_matrix      # mean of unknown corner nodes
    dirichlet_corner_weight: np.ndarray  # weight of Dirichlet corners per cell
    axes: tuple                          # per axis (G, K, w) in full dimension
    dirichlet_edges: np.ndarray          # number of Dirichlet neighbours per node

    @classmethod
    def build(cls, grid: StaggeredGrid) -> "_GridOperators":
        dims = range(grid.dim)
        low = [grid._low_dirichlet(a) for a in dims]
        A = [_node_cell_average(grid.N, low[a]) for a in dims]
        B = [_cell_corner_average(grid.N, low[a]) for a in dims]
        edge = [_edge_difference(grid.N, low[a]) for a in dims]
        M_nc = _kron_all(A)
        M_cn = _kron_all(B)
        b = 1.0 - np.asarray(M_cn.sum(axis=1)).ravel()
        axes, n_dir = [], np.zeros(grid.n_s)
        for a in dims:
            G_a, K_a, w_a, d_a = edge[a]
            # along the other axes an edge sees the average of its adjacent cells
            G = _kron_all([G_a if b_ == a else sp.identity(grid.s_shape[b_], format="csr")
                           for b_ in dims])
            K = _kron_all([K_a if b_ == a else A[b_] for b_ in dims])
            w = reduce(np.multiply.outer, [w_a if b_ == a else np.ones(grid.s_shape[b_])
                                          for b_ in dims]).ravel()
            n_dir += reduce(np.multiply.outer, [d_a if b_ == a else np.ones(grid.s_shape[b_])
                                               for b_ in dims]).ravel()
            axes.append((G, K, w))
        return cls(M_nc, M_cn, b, tuple(axes), n_dir)


@dataclass(frozen=True)
class SulfationState:
    t: float
    s: np.ndarray
    c: np.ndarray

    @classmethod
    def initial(cls, grid: StaggeredGrid, params: SulfationParams, t: float = 0.0):
        """``c = c0`` and ``s = 0`` inside the stone."""
        return cls(t, np.zeros(grid.n_s), np.full(grid.n_c, float(params.c0)))


# -- residual -------------------------------------------------------------

def _diffusion(s, phi, grid: StaggeredGrid, rho: float) -> np.ndarray:
    """``L_phi s``: sum of edge fluxes ``phi_e (s_p - s_q)`` out of each node.

    Next to an outer face the product ``phi_e s_0`` is replaced by ``rho``.
    """
    ops = grid.operators
    out = np.zeros(grid.n_s)
    for G, K, w in ops.axes:
        out += w * (G.T @ ((K @ phi) * (G @ s)))
    return out - rho * ops.dirichlet_edges


def _diffusion_matrix(phi, grid: StaggeredGrid) -> sp.csr_matrix:
    L = None
    for G, K, w in grid.operators.axes:
        term = sp.diags(w) @ G.T @ sp.diags(K @ phi) @ G
        L = term if L is None else L + term
    return sp.csr_matrix(L)


def _cell_s(s, phi, grid: StaggeredGrid, rho: float) -> np.ndarray:
    """Diagonal of ``S``: ``phi`` times the corner mean of ``s`` (porous form at outer faces)."""
    ops = grid.operators
    return phi * (ops.cell_from_nodes @ s) + rho * ops.dirichlet_corner_weight


def _split(u, grid: StaggeredGrid):
    return u[:grid.n_s], u[grid.n_s:]


def _check_sizes(grid: StaggeredGrid, **vectors):
    for name, v in vectors.items():
        want = grid.n_s if name.startswith("s") else grid.n_c
        if np.shape(v) != (want,):
            raise ValueError(f"{name} has shape {np.shape(v)}, expected ({want},)")


def _lagged_terms(s_prev, c_prev, dt, grid, params, scheme):
    """Parts of the residual that only depend on the previous time level."""
    theta = scheme_weight(scheme)
    lam = 1.0 - theta
    ops = grid.operators
    phi = porosity(c_prev, params)
    fs = -(ops.node_from_cells @ phi) * s_prev
    fc = -np.asarray(c_prev, dtype=float).copy()
    if lam > 0:
        fs += lam * dt * (params.a / params.m_c) * (ops.node_from_cells @ (phi * c_prev)) * s_prev
        fs += lam * dt * params.d / grid.h ** 2 * _diffusion(s_prev, phi, grid, params.rho_s0)
        fc += lam * dt * (params.a / params.m_s) * _cell_s(s_prev, phi, grid, params.rho_s0) * c_prev
    return fs, fc


def _implicit_terms(s, c, dt, grid, params, scheme):
    theta = scheme_weight(scheme)
    ops = grid.operators
    phi = porosity(c, params)
    fs = (ops.node_from_cells @ phi) * s
    fs += theta * dt * (params.a / params.m_c) * (ops.node_from_cells @ (phi * c)) * s
    fs += theta * dt * params.d / grid.h ** 2 * _diffusion(s, phi, grid, params.rho_s0)
    fc = c + theta * dt * (params.a / params.m_s) * _cell_s(s, phi, grid, params.rho_s0) * c
    return fs, fc


def residual(s, c, s_prev, c_prev, dt: float, grid: StaggeredGrid,
             params: SulfationParams, scheme: str = CRANK_NICHOLSON) -> np.ndarray:
    """Stacked residual ``[F_s; F_c]`` of one IE or CN step."""
    s, c, s_prev, c_prev = (np.asarray(v, dtype=float) for v in (s, c, s_prev, c_prev))
    _check_sizes(grid, s=s, c=c, s_prev=s_prev, c_prev=c_prev)
    fs, fc = _implicit_terms(s, c, dt, grid, params, scheme)
    gs, gc = _lagged_terms(s_prev, c_prev, dt, grid, params, scheme)
    return np.concatenate([fs + gs, fc + gc])


# -- Jacobian -------------------------------------------------------------

@dataclass
class JacobianBlocks:
    Jss: BandedMatrix
    Jsc: BandedMatrix
    Jcs: BandedMatrix
    Jcc: BandedMatrix
    s_shape: tuple = ()

    @property
    def n_s(self) -> int:
        return self.Jss.order

    @property
    def n_c(self) -> int:
        return self.Jcc.order

    def to_sparse(self) -> sp.csr_matrix:
        return sp.bmat([[self.Jss.to_sparse(), self._rect(self.Jsc, self.n_s, self.n_c)],
                        [self._rect(self.Jcs, self.n_c, self.n_s), self.Jcc.to_sparse()]],
                       format="csr")

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    @staticmethod
    def _rect(block, rows, cols):
        return block.to_sparse()[:rows, :cols] if isinstance(block, BandedMatrix) else block

    def matvec(self, v) -> np.ndarray:
        vs, vc = v[:self.n_s], v[self.n_s:]
        return np.concatenate([self.Jss.matvec(vs) + _rect_matvec(self.Jsc, vc, self.n_s),
                               _rect_matvec(self.Jcs, vs, self.n_c) + self.Jcc.matvec(vc)])

    def as_operator(self) -> LinearOperator:
        return LinearOperator(self.n_s + self.n_c, self.matvec)


def _square(m: sp.spmatrix) -> BandedMatrix:
    """Embed a possibly rectangular block in a square banded matrix."""
    n = max(m.shape)
    if m.shape != (n, n):
        m = sp.csr_matrix((m.tocoo().data, (m.tocoo().row, m.tocoo().col)), shape=(n, n))
    return BandedMatrix.from_sparse(m)


def _rect_matvec(block: BandedMatrix, v, rows: int) -> np.ndarray:
    if block.order == v.size:
        return block.matvec(v)[:rows]
    x = np.zeros(block.order)
    x[:v.size] = v
    return block.matvec(x)[:rows]


def assemble_jacobian(s, c, dt: float, grid: StaggeredGrid, params: SulfationParams,
                      scheme: str = CRANK_NICHOLSON) -> JacobianBlocks:
    """The four blocks of ``dF/d[s; c]``."""
    s, c = np.asarray(s, dtype=float), np.asarray(c, dtype=float)
    _check_sizes(grid, s=s, c=c)
    theta = scheme_weight(scheme)
    ops = grid.operators
    alpha = porosity_prime(params)
    phi = porosity(c, params)
    rs = theta * dt * params.a / params.m_c
    rc = theta * dt * params.a / params.m_s
    mu = theta * dt * params.d / grid.h ** 2

    Jss = sp.diags(ops.node_from_cells @ phi + rs * (ops.node_from_cells @ (phi * c)))
    Jss = Jss + mu * _diffusion_matrix(phi, grid)

    dphic = phi + alpha * c  # d(phi c)/dc
    Jsc = sp.diags(s) @ ops.node_from_cells @ sp.diags(alpha + rs * dphic)
    for G, K, w in ops.axes:
        Jsc = Jsc + (mu * alpha) * (sp.diags(w) @ G.T @ sp.diags(G @ s) @ K)

    Jcs = sp.diags(rc * phi * c) @ ops.cell_from_nodes
    Jcc = 1.0 + rc * (dphic * (ops.cell_from_nodes @ s) + params.rho_s0 * ops.dirichlet_corner_weight)

    return JacobianBlocks(BandedMatrix.from_sparse(sp.csr_matrix(Jss)),
                          _square(sp.csr_matrix(Jsc)), _square(sp.csr_matrix(Jcs)),
                          BandedMatrix.diag(Jcc), grid.s_shape)


# -- preconditioner -------------------------------------------------------

class BlockTriangularPreconditioner:
    """Apply the inverse of ``[[Jss, Jsc], [0, Jcc]]``.

    ``y_c = b_c / Jcc`` first, then ``y_s`` approximately solves
    ``Jss y_s = b_s - Jsc y_c`` with one V-cycle, MGM run to convergence, or
    an exact LU solve.
    """

    def __init__(self, blocks: JacobianBlocks, inner: str = ONE_V_CYCLE,
                 smoother: Optional[SmootherSpec] = None, mgm_rtol: float = 1e-10,
                 mgm_max_cycles: int = 100):
        if inner not in INNER_SOLVERS:
            raise ValueError(f"unknown inner solver {inner!r}")
        jcc = blocks.Jcc.diagonal(0)
        if np.any(jcc == 0):
            raise ZeroDivisionError("Jcc has a zero diagonal entry")
        self.blocks = blocks
        self.inner = inner
        self._jcc = jcc
        self.mgm_rtol = mgm_rtol
        self.mgm_max_cycles = mgm_max_cycles
        self.cycles: list[int] = []
        if inner == EXACT:
            self._lu = lu_factor(blocks.Jss.to_dense())
        else:
            if smoother is None:
                smoother = (SmootherSpec(DAMPED_JACOBI, 2.0 / 3.0) if len(blocks.s_shape) == 1
                            else SmootherSpec(RED_BLACK_GS, 1.0))
            self.hierarchy = MultigridHierarchy(blocks.Jss, blocks.s_shape, smoother,
                                                neumann_end=True)

    def solve_ss(self, r) -> np.ndarray:
        if self.inner == EXACT:
            return lu_solve(self._lu, r)
        if self.inner == ONE_V_CYCLE:
            return v_cycle(self.hierarchy, 0, np.zeros(r.size), r)
        x, cycles = mgm_solve(self.hierarchy, r, rtol=self.mgm_rtol, max_cycles=self.mgm_max_cycles)
        self.cycles.append(cycles)
        return x

    def __call__(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        n_s = self.blocks.n_s
        y_c = b[n_s:] / self._jcc
        y_s = self.solve_ss(b[:n_s] - _rect_matvec(self.blocks.Jsc, y_c, n_s))
        return np.concatenate([y_s, y_c])

    def matvec(self, y) -> np.ndarray:
        """``P y``; handy for checking the triangular solve."""
        n_s = self.blocks.n_s
        ys, yc = y[:n_s], y[n_s:]
        return np.concatenate([self.blocks.Jss.matvec(ys) + _rect_matvec(self.blocks.Jsc, yc, n_s),
                               self._jcc * yc])


def build_preconditioner(blocks: JacobianBlocks, inner: str = ONE_V_CYCLE,
                         params: Optional[SulfationParams] = None,
                         **kwargs) -> BlockTriangularPreconditioner:
    if params is not None and not params.beta > 0:
        warnings.warn("porosity is not bounded away from zero (beta <= 0); "
                      "the block preconditioner may lose its optimality", RuntimeWarning)
    return BlockTriangularPreconditioner(blocks, inner, **kwargs)


# -- time stepping --------------------------------------------------------

@dataclass(frozen=True)
class SulfationSolverConfig:
    preconditioner: str = BLOCK_TRIANGULAR
    inner: str = ONE_V_CYCLE
    newton: NewtonConfig = NewtonConfig()
    linear: GMRESConfig = GMRESConfig()
    smoother: Optional[SmootherSpec] = None
    mgm_rtol: float = 1e-10
    mgm_max_cycles: int = 100

    def __post_init__(self):
        if self.preconditioner not in (BLOCK_TRIANGULAR, NO_PRECONDITIONER):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")
        if self.inner not in INNER_SOLVERS:
            raise ValueError(f"unknown inner solver {self.inner!r}")


def step(state: SulfationState, dt: float, grid: StaggeredGrid, params: SulfationParams,
         scheme: str = CRANK_NICHOLSON, solver: SulfationSolverConfig = SulfationSolverConfig(),
         step_index: int = 1, cycle_log: Optional[list] = None):
    """One implicit step; returns ``(new_state, NewtonReport)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    gs, gc = _lagged_terms(state.s, state.c, dt, grid, params, scheme)
    lagged = np.concatenate([gs, gc])

    def res(u):
        s, c = _split(u, grid)
        fs, fc = _implicit_terms(s, c, dt, grid, params, scheme)
        return np.concatenate([fs, fc]) + lagged

    def jac(u):
        s, c = _split(u, grid)
        blocks = assemble_jacobian(s, c, dt, grid, params, scheme)
        if solver.preconditioner == NO_PRECONDITIONER:
            return blocks.as_operator(), None
        P = build_preconditioner(blocks, solver.inner, params, smoother=solver.smoother,
                                 mgm_rtol=solver.mgm_rtol, mgm_max_cycles=solver.mgm_max_cycles)
        if cycle_log is not None:
            cycle_log.append(P.cycles)
        return blocks.as_operator(), P

    problem = NonlinearProblem(res, jac, grid.n_s + grid.n_c)
    u0 = np.concatenate([state.s, state.c])
    try:
        u, report = newton_solve(problem, u0, solver.newton, solver.linear)
    except SolverError as exc:
        raise type(exc)(f"step {step_index}: {exc}") from exc
    if not report.converged:
        raise NewtonConvergenceError(
            f"step {step_index}: Newton did not converge in {report.iterations} iterations "
            f"(last increment {report.increment_norms[-1]:.3e})")
    s, c = _split(u, grid)
    return SulfationState(state.t + dt, s, c), report


def integrate(params: SulfationParams, grid: StaggeredGrid, scheme: str = CRANK_NICHOLSON,
              T: float = 1.0, dt: Optional[float] = None,
              solver: SulfationSolverConfig = SulfationSolverConfig(),
              snapshot_times: Sequence[float] = (), track_front: bool = False,
              initial: Optional[SulfationState] = None,
              callback: Optional[Callable] = None):
    """Advance from ``initial`` (default: pristine stone at t=0) over time ``T``.

    ``dt`` defaults to ``h``; the last step is shortened to land on ``T``.
    Returns ``(snapshots, records)`` where ``snapshots`` maps each requested
    time to the first state at or after it, and always holds the final state
    under key ``T``.
    """
    if dt is None:
        dt = grid.h
    if not dt > 0:
        raise ValueError("dt must be positive")
    state = initial if initial is not None else SulfationState.initial(grid, params)
    t_end = state.t + T
    for ts in snapshot_times:
        if not 0 <= ts <= T + 1e-12:
            raise ValueError(f"snapshot time {ts} outside [0, {T}]")
    pending = sorted(snapshot_times)
    snapshots = {}
    while pending and pending[0] <= 1e-12:
        snapshots[pending.pop(0)] = state
    records, n = [], 0
    while state.t < t_end - 1e-12 * max(1.0, t_end):
        n += 1
        h_step = min(dt, t_end - state.t)
        cycles = []
        state, report = step(state, h_step, grid, params, scheme, solver, n, cycles)
        extra = {}
        if track_front:
            try:
                extra["front"] = front_position(state.c, grid)
            except NoFrontError:
                extra["front"] = None
        flat = [k for per in cycles for k in per]
        if flat:
            extra["mgm_cycles_avg"] = float(np.mean(flat))
        records.append(RunRecord.from_newton(n, state.t, report, **extra))
        while pending and pending[0] <= state.t - (t_end - T) + 1e-12:
            snapshots[pending.pop(0)] = state
        if callback is not None:
            callback(state, report)
        logger.debug("sulfation step %d t=%.5f newton=%d", n, state.t, report.iterations)
    snapshots[T] = state
    return snapshots, records


# -- front tracking -------------------------------------------------------

def front_position(c, grid: StaggeredGrid) -> float:
    """Location of the steepest carbonate gradient.

    The gradient between cells ``j`` and ``j+1`` is attributed to the node
    between them; ties go to the smallest ``x``.
    """
    if grid.dim != 1:
        raise ValueError("front tracking is only defined in 1D")
    c = np.asarray(c, dtype=float)
    if c.size < 3:
        raise ValueError("front tracking needs at least 3 cells")
    jumps = np.abs(np.diff(c)) / grid.h
    top = jumps.max()
    if top <= 1e-14 * max(1.0, float(np.max(np.abs(c)))) / grid.h:
        raise NoFrontError("carbonate profile is flat; no front")
    j = int(np.flatnonzero(jumps >= top * (1 - 1e-12))[0])
    return (j + 1) * grid.h


def fit_front_slope(series, window: float = 0.5, min_samples: int = 8) -> float:
    """Least-squares slope of ``log x`` against ``log t`` over the trailing ``window`` fraction."""
    data = np.asarray(list(series), dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError("series must hold (t, x) pairs")
    if not 0 < window <= 1:
        raise ValueError("window must lie in (0, 1]")
    tail = data[int(np.floor(len(data) * (1 - window))):]
    if len(tail) < min_samples:
        raise InsufficientDataError(
            f"need at least {min_samples} samples in the window, got {len(tail)}")
    if np.any(tail <= 0):
        raise ValueError("times and positions must be positive for a log-log fit")
    return float(np.polyfit(np.log(tail[:, 0]), np.log(tail[:, 1]), 1)[0])
