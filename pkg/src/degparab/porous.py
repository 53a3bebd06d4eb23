"""Porous-medium type equation ``u_t = div(D(u) grad u)`` on 1D/2D grids.

Finite differences with face coefficients ``D_{k+1/2} = (D(u_k) + D(u_{k+1}))/2``,
homogeneous-in-time Dirichlet data, and Implicit Euler or Crank-Nicholson
in time.  Each step is a Newton solve whose Jacobian systems are handled by
GMRES, optionally preconditioned with multigrid built on ``X_N``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .linalg import BandedMatrix, GMRESConfig
from .multigrid import (DAMPED_JACOBI, RED_BLACK_GS, MultigridHierarchy, SmootherSpec,
                        mgm_preconditioner, v_cycle_preconditioner)
from .newton import (SolverError, EXPLICIT_EULER_AVERAGE, NewtonConfig, NewtonConvergenceError,
                     NonlinearProblem, TimestepGuardError, newton_solve, timestep_guard,
                     warm_start)
from .records import RunRecord

logger = logging.getLogger(__name__)

IMPLICIT_EULER = "implicit-euler"
CRANK_NICHOLSON = "crank-nicholson"
SCHEMES = (IMPLICIT_EULER, CRANK_NICHOLSON)

NO_PRECONDITIONER = "none"
ONE_V_CYCLE = "one-v-cycle"
MGM_TO_CONVERGENCE = "mgm-to-convergence"
PRECONDITIONER_MODES = (NO_PRECONDITIONER, ONE_V_CYCLE, MGM_TO_CONVERGENCE)


def scheme_weight(scheme: str) -> float:
    """Weight of the implicit diffusion term: 1 for IE, 1/2 for CN."""
    if scheme == IMPLICIT_EULER:
        return 1.0
    if scheme == CRANK_NICHOLSON:
        return 0.5
    raise ValueError(f"unknown scheme {scheme!r}")


@dataclass(frozen=True)
class DiffusivitySpec:
    """``D(u)`` and ``D'(u)``.

    ``power-law`` is ``D(u) = |u|^m``.  ``porous-medium`` is
    ``D(u) = m |u|^(m-1)``, for which ``div(D(u) grad u) = Laplace(u^m)``; this
    is the equation the Barenblatt profile with exponent ``m`` solves.
    Absolute values keep small negative undershoots well defined.
    """

    kind: str = "power-law"
    m: float = 4.0
    kappa: float = 1.0
    D: Optional[Callable] = field(default=None, compare=False)
    Dprime: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind == "power-law":
            if not self.m > 0:
                raise ValueError("power-law exponent must be positive")
        elif self.kind == "porous-medium":
            if not self.m > 1:
                raise ValueError("porous-medium exponent must exceed 1")
        elif self.kind == "constant":
            if self.kappa < 0:
                raise ValueError("constant diffusivity must be non-negative")
        elif self.kind == "custom":
            if self.D is None or self.Dprime is None:
                raise ValueError("custom diffusivity needs both D and Dprime")
        else:
            raise ValueError(f"unknown diffusivity kind {self.kind!r}")

    def value(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.kind == "power-law":
            return np.abs(u) ** self.m
        if self.kind == "porous-medium":
            return self.m * np.abs(u) ** (self.m - 1)
        if self.kind == "constant":
            return np.full_like(u, self.kappa)
        return np.asarray(self.D(u), dtype=float)

    def derivative(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.kind == "power-law":
            return self.m * np.abs(u) ** (self.m - 1) * np.sign(u)
        if self.kind == "porous-medium":
            return self.m * (self.m - 1) * np.abs(u) ** (self.m - 2) * np.sign(u)
        if self.kind == "constant":
            return np.zeros_like(u)
        return np.asarray(self.Dprime(u), dtype=float)


@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``[a, b]^dim`` with ``N`` interior points per axis."""

    N: int
    a: float = -6.0
    b: float = 6.0
    dim: int = 1

    def __post_init__(self):
        if self.N < 3:
            raise ValueError("a grid needs at least 3 interior points per axis")
        if self.dim not in (1, 2):
            raise ValueError("only 1D and 2D grids are supported")
        if not self.b > self.a:
            raise ValueError("grid bounds must satisfy a < b")

    @classmethod
    def from_intervals(cls, intervals: int, a: float = -6.0, b: float = 6.0,
                       dim: int = 1) -> "Grid":
        """Grid with ``intervals`` cells per axis, i.e. ``intervals - 1`` unknowns."""
        return cls(intervals - 1, a, b, dim)

    @property
    def h(self) -> float:
        return (self.b - self.a) / (self.N + 1)

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.dim

    @property
    def size(self) -> int:
        return self.N ** self.dim

    def nodes(self) -> np.ndarray:
        """All node coordinates ``x_k = a + k h``, ``k = 0..N+1``."""
        return self.a + self.h * np.arange(self.N + 2)

    def interior_points(self) -> np.ndarray:
        """Interior coordinates: shape ``(N,)`` in 1D, ``(N, N, 2)`` in 2D."""
        x = self.nodes()[1:-1]
        if self.dim == 1:
            return x
        return np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1)


@dataclass(frozen=True)
class PorousState:
    t: float
    u: np.ndarray
    boundary: Optional[np.ndarray] = None


# -- exact solution -------------------------------------------------------

def barenblatt(t: float, x, m: float, d: int = 1):
    """Barenblatt-Pattle profile solving ``u_t = Laplace(u^m)``.

    ``x`` holds positions (1D) or points with a trailing axis of length ``d``.
    """
    if t <= 0:
        raise ValueError("the Barenblatt solution is singular for t <= 0")
    if not m > 1:
        raise ValueError("the profile needs m > 1")
    x = np.asarray(x, dtype=float)
    r2 = x ** 2 if d == 1 else np.sum(x ** 2, axis=-1)
    alpha = d / (d * (m - 1) + 2)
    k = alpha * (m - 1) / (2 * m * d)
    base = 1.0 - k * r2 / t ** (2 * alpha / d)
    return t ** (-alpha) * np.maximum(base, 0.0) ** (1.0 / (m - 1))


def barenblatt_on_grid(t: float, grid: Grid, m: float) -> np.ndarray:
    return barenblatt(t, grid.interior_points(), m, grid.dim).ravel()


def error_vs_exact(state: PorousState, m: float, grid: Grid):
    """Scaled l1 and max-norm errors against the Barenblatt solution at ``state.t``."""
    diff = np.abs(state.u - barenblatt_on_grid(state.t, grid, m))
    return float(grid.h ** grid.dim * diff.sum()), float(diff.max())


# -- spatial operators ----------------------------------------------------

def _padded(u, grid: Grid, boundary=None) -> np.ndarray:
    full = (grid.N + 2,) * grid.dim
    U = np.zeros(full) if boundary is None else np.array(boundary, dtype=float).reshape(full)
    inner = (slice(1, -1),) * grid.dim
    U[inner] = np.asarray(u, dtype=float).reshape(grid.shape)
    return U


def _axis_slices(dim: int, axis: int, sl):
    """Interior slices on every axis except ``axis``, which gets ``sl``."""
    return tuple(sl if a == axis else slice(1, -1) for a in range(dim))


def _neighbours(U: np.ndarray, dim: int, axis: int):
    n = U.shape[0] - 2
    minus = U[_axis_slices(dim, axis, slice(0, n))]
    plus = U[_axis_slices(dim, axis, slice(2, n + 2))]
    return minus, plus


def _assemble_neighbour_matrix(main, minus_coef, plus_coef, grid: Grid) -> BandedMatrix:
    """Banded matrix from per-node couplings to axis neighbours.

    ``minus_coef[a]`` / ``plus_coef[a]`` hold, for each interior node, the
    coefficient multiplying its lower / upper neighbour along axis ``a``.
    Couplings to boundary nodes are dropped.
    """
    n, N = grid.size, grid.N
    offsets, diags = [0], [np.asarray(main, dtype=float).ravel()]
    for axis in range(grid.dim):
        stride = N ** (grid.dim - 1 - axis)
        up = np.array(plus_coef[axis], dtype=float)
        up[_index_at(grid.dim, axis, N - 1)] = 0.0
        lo = np.array(minus_coef[axis], dtype=float)
        lo[_index_at(grid.dim, axis, 0)] = 0.0
        offsets += [stride, -stride]
        diags += [up.ravel()[:n - stride], lo.ravel()[stride:]]
    return BandedMatrix(n, offsets, diags)


def _index_at(dim: int, axis: int, i: int):
    return tuple(i if a == axis else slice(None) for a in range(dim))


def _face_coefficients(Dv: np.ndarray, dim: int):
    """Per-axis (minus, plus) face values ``(D_k + D_nbr)/2`` for interior nodes."""
    inner = Dv[(slice(1, -1),) * dim]
    faces = []
    for axis in range(dim):
        dm, dp = _neighbours(Dv, dim, axis)
        faces.append((0.5 * (inner + dm), 0.5 * (inner + dp)))
    return faces


def apply_L_D(u, spec: DiffusivitySpec, grid: Grid, boundary=None) -> np.ndarray:
    """``L_D(u) u`` including the Dirichlet boundary contributions."""
    U = _padded(u, grid, boundary)
    Dv = spec.value(U)
    if not np.all(np.isfinite(Dv)):
        raise FloatingPointError("non-finite diffusivity")
    inner = U[(slice(1, -1),) * grid.dim]
    out = np.zeros(grid.shape)
    for axis, (fm, fp) in enumerate(_face_coefficients(Dv, grid.dim)):
        um, up = _neighbours(U, grid.dim, axis)
        out += fp * (up - inner) + fm * (um - inner)
    return out.ravel()


def assemble_L_D(u, spec: DiffusivitySpec, grid: Grid, boundary=None):
    """``L_D`` as a banded matrix plus the Dirichlet right-hand side.

    Returns ``(L, g)`` with ``L @ u + g == apply_L_D(u, ...)``.
    """
    U = _padded(u, grid, boundary)
    Dv = spec.value(U)
    if not np.all(np.isfinite(Dv)):
        raise FloatingPointError("non-finite diffusivity")
    faces = _face_coefficients(Dv, grid.dim)
    main = -sum(fm + fp for fm, fp in faces)
    L = _assemble_neighbour_matrix(main, [f[0] for f in faces], [f[1] for f in faces], grid)
    L.symmetric = True
    g = np.zeros(grid.shape)
    N = grid.N
    for axis, (fm, fp) in enumerate(faces):
        um, up = _neighbours(U, grid.dim, axis)
        lo, hi = _index_at(grid.dim, axis, 0), _index_at(grid.dim, axis, N - 1)
        g[lo] += fm[lo] * um[lo]
        g[hi] += fp[hi] * up[hi]
    return L, g.ravel()


def assemble_T_N(u, grid: Grid, boundary=None) -> BandedMatrix:
    """Difference matrix with ``T[j, q] = u_q - u_j`` for neighbours ``q`` and
    ``T[j, j] = sum_q (u_q - u_j)``; boundary neighbours feed the diagonal only."""
    U = _padded(u, grid, boundary)
    inner = U[(slice(1, -1),) * grid.dim]
    main = np.zeros(grid.shape)
    minus, plus = [], []
    for axis in range(grid.dim):
        um, up = _neighbours(U, grid.dim, axis)
        main += (um - inner) + (up - inner)
        # T[j, j+e] = u_{j+e} - u_j ; T[j, j-e] = u_{j-e} - u_j
        plus.append(up - inner)
        minus.append(um - inner)
    return _assemble_neighbour_matrix(main, minus, plus, grid)


# -- residual and Jacobian ------------------------------------------------

def residual(u, u_prev, dt: float, grid: Grid, spec: DiffusivitySpec,
             scheme: str = CRANK_NICHOLSON, boundary=None) -> np.ndarray:
    """Nonlinear residual of one IE or CN step."""
    theta = scheme_weight(scheme)
    mu = dt / grid.h ** 2
    u = np.asarray(u, dtype=float)
    u_prev = np.asarray(u_prev, dtype=float)
    f = u - u_prev - theta * mu * apply_L_D(u, spec, grid, boundary)
    if scheme == CRANK_NICHOLSON:
        f -= (1.0 - theta) * mu * apply_L_D(u_prev, spec, grid, boundary)
    return f


def x_matrix(u, dt: float, grid: Grid, spec: DiffusivitySpec,
             scheme: str = CRANK_NICHOLSON, boundary=None) -> BandedMatrix:
    """``X_N = I - theta dt/h^2 L_D(u)``, the symmetric part used for multigrid."""
    theta = scheme_weight(scheme)
    L, _ = assemble_L_D(u, spec, grid, boundary)
    X = BandedMatrix.identity(grid.size) - (theta * dt / grid.h ** 2) * L
    X.symmetric = True
    return X


def jacobian(u, dt: float, grid: Grid, spec: DiffusivitySpec,
             scheme: str = CRANK_NICHOLSON, boundary=None) -> BandedMatrix:
    """``F'(u) = X_N + Y_N`` with ``Y_N = -theta dt/h^2 (1/2) T_N diag(D')``.

    The extra 1/2 is the derivative of the face average.
    """
    theta = scheme_weight(scheme)
    X = x_matrix(u, dt, grid, spec, scheme, boundary)
    T = assemble_T_N(u, grid, boundary)
    Y = (-0.5 * theta * dt / grid.h ** 2) * T.scale_columns(spec.derivative(u))
    return X + Y


# -- time stepping --------------------------------------------------------

@dataclass(frozen=True)
class PorousSolverConfig:
    preconditioner: str = ONE_V_CYCLE
    newton: NewtonConfig = NewtonConfig(timestep_guard_C=1.0)
    linear: GMRESConfig = GMRESConfig()
    smoother: Optional[SmootherSpec] = None
    mgm_rtol: float = 1e-10
    mgm_max_cycles: int = 100

    def __post_init__(self):
        if self.preconditioner not in PRECONDITIONER_MODES:
            raise ValueError(f"unknown preconditioner mode {self.preconditioner!r}")

    def smoother_for(self, dim: int) -> SmootherSpec:
        if self.smoother is not None:
            return self.smoother
        return SmootherSpec(DAMPED_JACOBI, 2.0 / 3.0) if dim == 1 else SmootherSpec(RED_BLACK_GS, 1.0)


def build_problem(u_prev, dt: float, grid: Grid, spec: DiffusivitySpec, scheme: str,
                  solver: PorousSolverConfig, boundary=None, cycle_log=None) -> NonlinearProblem:
    u_prev = np.asarray(u_prev, dtype=float)
    theta = scheme_weight(scheme)
    mu = dt / grid.h ** 2
    # the lagged CN term is fixed during the step
    lagged = u_prev.copy()
    if scheme == CRANK_NICHOLSON:
        lagged += (1.0 - theta) * mu * apply_L_D(u_prev, spec, grid, boundary)

    def res(u):
        return u - lagged - theta * mu * apply_L_D(u, spec, grid, boundary)

    def jac(u):
        X = x_matrix(u, dt, grid, spec, scheme, boundary)
        T = assemble_T_N(u, grid, boundary)
        A = X + (-0.5 * theta * mu) * T.scale_columns(spec.derivative(u))
        if solver.preconditioner == NO_PRECONDITIONER:
            return A, None
        hier = MultigridHierarchy(X, grid.shape, solver.smoother_for(grid.dim))
        if solver.preconditioner == ONE_V_CYCLE:
            return A, v_cycle_preconditioner(hier)
        M = mgm_preconditioner(hier, solver.mgm_rtol, solver.mgm_max_cycles)
        if cycle_log is not None:
            cycle_log.append(M.cycles)
        return A, M

    return NonlinearProblem(res, jac, grid.size)


def step(state: PorousState, dt: float, grid: Grid, spec: DiffusivitySpec,
         scheme: str = CRANK_NICHOLSON, solver: PorousSolverConfig = PorousSolverConfig(),
         step_index: int = 1, cycle_log=None):
    """Advance one time step; returns ``(new_state, NewtonReport)``."""
    C = solver.newton.timestep_guard_C
    if C is not None and not timestep_guard(dt, grid.h, C):
        raise TimestepGuardError(
            f"step {step_index}: dt={dt:.6g} exceeds C*h={C * grid.h:.6g}")
    problem = build_problem(state.u, dt, grid, spec, scheme, solver, state.boundary, cycle_log)
    mu = dt / grid.h ** 2
    u0 = warm_start(state.u, solver.newton.warm_start,
                    lambda v: v + mu * apply_L_D(v, spec, grid, state.boundary))
    try:
        u, report = newton_solve(problem, u0, solver.newton, solver.linear)
    except SolverError as exc:
        raise type(exc)(f"step {step_index}: {exc}") from exc
    if not report.converged:
        raise NewtonConvergenceError(
            f"step {step_index}: Newton did not converge in {report.iterations} iterations "
            f"(last increment {report.increment_norms[-1]:.3e})")
    return PorousState(state.t + dt, u, state.boundary), report


def uniform_dt(T: float, h: float, lam: float) -> tuple:
    """Step size ``T / ceil(T / (lam h))`` and the step count."""
    if not lam > 0:
        raise ValueError("timestep ratio must be positive")
    if T <= 0:
        return 0.0, 0
    n = math.ceil(T / (lam * h) - 1e-12)
    return T / n, n


def integrate(spec: DiffusivitySpec, grid: Grid, scheme: str = CRANK_NICHOLSON,
              t0: float = 1.0, T: float = 20.0 / 32.0, lam: float = 1.0,
              solver: PorousSolverConfig = PorousSolverConfig(),
              initial: Optional[PorousState] = None, track_error: bool = True):
    """Integrate from ``t0`` over elapsed time ``T`` with ``dt = lam h`` (rounded down).

    Starts from the Barenblatt profile at ``t0`` unless ``initial`` is given;
    errors against it are recorded for ``porous-medium`` diffusivities.
    Returns ``(final_state, records)``.
    """
    if initial is None:
        initial = PorousState(t0, barenblatt_on_grid(t0, grid, spec.m))
    dt, nsteps = uniform_dt(T, grid.h, lam)
    state, records = initial, []
    track_error = track_error and spec.kind == "porous-medium"
    for n in range(1, nsteps + 1):
        cycles = []
        state, report = step(state, dt, grid, spec, scheme, solver, n, cycles)
        extra = {}
        if track_error:
            extra["l1_error"], extra["linf_error"] = error_vs_exact(state, spec.m, grid)
        flat = [c for per_newton in cycles for c in per_newton]
        if flat:
            extra["mgm_cycles_avg"] = float(np.mean(flat))
        records.append(RunRecord.from_newton(n, state.t, report, **extra))
        logger.debug("porous step %d t=%.5f newton=%d", n, state.t, report.iterations)
    return state, records
