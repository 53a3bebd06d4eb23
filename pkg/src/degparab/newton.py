"""Plain Newton iteration with GMRES inner solves."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .linalg import GMRESConfig, LinearAlgebraError, gmres

logger = logging.getLogger(__name__)

PREVIOUS_STEP = "previous-step"
EXPLICIT_EULER_AVERAGE = "explicit-euler-average"
WARM_START_MODES = (PREVIOUS_STEP, EXPLICIT_EULER_AVERAGE)


class SolverError(RuntimeError):
    """A time step could not be completed."""


class NewtonDivergence(SolverError):
    pass


class NewtonConvergenceError(SolverError):
    pass


class LinearSolveFailure(SolverError):
    pass


class TimestepGuardError(SolverError):
    pass


@dataclass
class NonlinearProblem:
    """Residual ``F`` and its Jacobian.

    ``jacobian(u)`` returns ``(A, M)``: the Jacobian as anything :func:`gmres`
    accepts, and a preconditioner callable (or ``None``) built for it.
    """

    residual: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], tuple]
    dimension: int


@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-6
    max_iter: int = 30
    warm_start: str = PREVIOUS_STEP
    timestep_guard_C: Optional[float] = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("Newton tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.warm_start not in WARM_START_MODES:
            raise ValueError(f"unknown warm start mode {self.warm_start!r}")


@dataclass
class NewtonReport:
    iterations: int = 0
    increment_norms: list = field(default_factory=list)
    krylov: list = field(default_factory=list)
    converged: bool = False

    def gmres_counts(self) -> list:
        return [k.iterations for k in self.krylov]


def newton_solve(problem: NonlinearProblem, u0, cfg: NewtonConfig = NewtonConfig(),
                 linear: GMRESConfig = GMRESConfig()):
    """Solve ``F(u) = 0`` starting from ``u0``.

    Each iteration solves ``F'(u) v = -F(u)`` with preconditioned GMRES and
    sets ``u <- u + v``; it stops once ``||v||_inf <= cfg.tol``.
    """
    u = np.array(u0, dtype=float)
    if u.shape != (problem.dimension,):
        raise ValueError(f"initial guess has shape {u.shape}, expected ({problem.dimension},)")
    if not np.all(np.isfinite(u)):
        raise NewtonDivergence("initial guess is not finite")
    report = NewtonReport()
    for s in range(1, cfg.max_iter + 1):
        f = problem.residual(u)
        if not np.all(np.isfinite(f)):
            raise NewtonDivergence(f"non-finite residual at Newton iteration {s}")
        a, m = problem.jacobian(u)
        try:
            v, kr = gmres(a, -f, M=m, rtol=linear.rtol, max_iter=linear.max_iter)
        except LinearAlgebraError as exc:
            raise LinearSolveFailure(f"linear solve failed at Newton iteration {s}: {exc}") from exc
        if not kr.converged:
            raise LinearSolveFailure(
                f"GMRES did not converge at Newton iteration {s} "
                f"({kr.iterations} iterations, residual {kr.residual_history[-1]:.3e})")
        u = u + v
        inc = float(np.max(np.abs(v))) if v.size else 0.0
        report.iterations = s
        report.increment_norms.append(inc)
        report.krylov.append(kr)
        if not np.isfinite(inc):
            raise NewtonDivergence(f"non-finite Newton increment at iteration {s}")
        if inc <= cfg.tol:
            report.converged = True
            break
    return u, report


def warm_start(u_prev, mode: str = PREVIOUS_STEP,
               explicit_step: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> np.ndarray:
    """Initial Newton guess for the next time level.

    ``explicit_step`` maps ``u`` to the explicit Euler value
    ``u + dt/h^2 L_D(u) u``; the average mode returns the mean of that value
    and ``u_prev``.
    """
    u_prev = np.asarray(u_prev, dtype=float)
    if mode == PREVIOUS_STEP:
        return u_prev.copy()
    if mode == EXPLICIT_EULER_AVERAGE:
        if explicit_step is None:
            raise ValueError("explicit-euler-average needs an explicit step")
        return 0.5 * (u_prev + explicit_step(u_prev))
    raise ValueError(f"unknown warm start mode {mode!r}")


def timestep_guard(dt: float, h: float, C: float) -> bool:
    """True iff ``dt <= C h`` (inclusive, up to rounding)."""
    if dt <= 0 or h <= 0 or C <= 0:
        raise ValueError("dt, h and C must be positive")
    return dt <= C * h * (1.0 + 1e-12)
