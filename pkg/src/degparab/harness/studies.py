"""Experiment drivers that turn solver runs into tables.

Each study returns a :class:`StudyResult`: named tables (lists of flat row
dicts in a fixed column order), a summary dict of fitted quantities, and the
per-run records.  Independent runs may be spread over worker processes; the
results are always assembled in the order the runs were listed.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import porous, sulfation
from ..linalg import GMRESConfig
from ..newton import NewtonConfig, SolverError
from .config import ExperimentConfig

logger = logging.getLogger(__name__)

_PRECONDITIONER_TO_POROUS = {"none": porous.NO_PRECONDITIONER,
                             "one-v-cycle": porous.ONE_V_CYCLE,
                             "mgm-to-convergence": porous.MGM_TO_CONVERGENCE}


@dataclass
class StudyResult:
    kind: str
    tables: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    runs: list = field(default_factory=list)
    partial: bool = False


class StudyFailure(RuntimeError):
    """A solver failed mid-study; ``result`` holds what finished before it."""

    def __init__(self, message: str, result: StudyResult):
        super().__init__(message)
        self.result = result


def fit_exponent(N, values) -> float:
    """Least-squares slope of ``log values`` against ``log N``."""
    N, values = np.asarray(N, dtype=float), np.asarray(values, dtype=float)
    if len(N) < 2:
        return float("nan")
    return float(np.polyfit(np.log(N), np.log(values), 1)[0])


def gmres_stats(records) -> dict:
    """Min, mean and max GMRES iterations over every linear solve of a run."""
    if not records:
        return {"gmres_min": 0, "gmres_avg": 0.0, "gmres_max": 0, "newton_avg": 0.0}
    solves = np.array([r.newton_iterations for r in records], dtype=float)
    avgs = np.array([r.gmres_avg for r in records])
    return {"gmres_min": int(min(r.gmres_min for r in records)),
            "gmres_avg": float(np.sum(avgs * solves) / np.sum(solves)),
            "gmres_max": int(max(r.gmres_max for r in records)),
            "newton_avg": float(np.mean(solves))}


# -- run helpers (module level so worker processes can pickle them) --------

def _linear(cfg: ExperimentConfig) -> GMRESConfig:
    return GMRESConfig(rtol=cfg.gmres_rtol)


def porous_solver(cfg: ExperimentConfig, mode: str) -> porous.PorousSolverConfig:
    newton = NewtonConfig(tol=cfg.newton_tol, max_iter=cfg.newton_max_iter,
                          warm_start=cfg.warm_start, timestep_guard_C=cfg.guard_C)
    return porous.PorousSolverConfig(_PRECONDITIONER_TO_POROUS[mode], newton, _linear(cfg),
                                     mgm_rtol=cfg.mgm_rtol)


def sulfation_solver(cfg: ExperimentConfig, mode: str) -> sulfation.SulfationSolverConfig:
    newton = NewtonConfig(tol=cfg.newton_tol, max_iter=cfg.newton_max_iter)
    if mode == "none":
        return sulfation.SulfationSolverConfig(sulfation.NO_PRECONDITIONER, newton=newton,
                                               linear=_linear(cfg), mgm_rtol=cfg.mgm_rtol)
    return sulfation.SulfationSolverConfig(sulfation.BLOCK_TRIANGULAR, mode, newton,
                                           _linear(cfg), mgm_rtol=cfg.mgm_rtol)


def sulfation_params(cfg: ExperimentConfig) -> sulfation.SulfationParams:
    return sulfation.SulfationParams(a=cfg.a, d=cfg.d, m_c=cfg.m_c, m_s=cfg.m_s,
                                     alpha=cfg.alpha, beta=cfg.beta, c0=cfg.c0,
                                     rho_s0=cfg.rho_s0)


def porous_grid(cfg: ExperimentConfig, N: int) -> porous.Grid:
    # N counts intervals, so 2^k gives 2^k - 1 unknowns per axis
    return porous.Grid.from_intervals(N, cfg.domain_a, cfg.domain_b, cfg.dim)


def _porous_run(cfg: ExperimentConfig, N: int, scheme: str, mode: str, track_error: bool):
    spec = porous.DiffusivitySpec("porous-medium", m=cfg.m)
    state, records = porous.integrate(spec, porous_grid(cfg, N), scheme, cfg.t0, cfg.T,
                                      cfg.lam, porous_solver(cfg, mode),
                                      track_error=track_error)
    return records


def _sulfation_run(cfg: ExperimentConfig, N: int, scheme: str, mode: str,
                   track_front: bool = False, snapshot_times=()):
    grid = sulfation.StaggeredGrid(N, cfg.dim, cfg.L)
    return sulfation.integrate(sulfation_params(cfg), grid, scheme, cfg.T, cfg.dt,
                               sulfation_solver(cfg, mode), snapshot_times, track_front)


def _execute(tasks, cfg: ExperimentConfig, result: StudyResult, collect: Callable):
    """Run ``(label, fn, args)`` tasks in order and feed results to ``collect``.

    A solver failure stops the study; finished runs stay in ``result``.
    """
    def fail(label, exc):
        result.partial = True
        raise StudyFailure(f"{label}: {exc}", result) from exc

    if cfg.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = [pool.submit(fn, *args) for _, fn, args in tasks]
            for (label, _, _), fut in zip(tasks, futures):
                try:
                    out = fut.result()
                except SolverError as exc:
                    fail(label, exc)
                collect(label, out)
        return
    for label, fn, args in tasks:
        logger.info("running %s", label)
        try:
            out = fn(*args)
        except SolverError as exc:
            fail(label, exc)
        collect(label, out)


def _records_rows(label: dict, records) -> list:
    return [{**label, **r.as_dict()} for r in records]


# -- studies --------------------------------------------------------------

def run_porous_convergence(cfg: ExperimentConfig) -> StudyResult:
    """Final-time Barenblatt errors per (scheme, N) and fitted decay exponents."""
    result = StudyResult(cfg.kind)
    rows = []
    tasks = [((scheme, N), _porous_run, (cfg, N, scheme, "one-v-cycle", True))
             for scheme in cfg.schemes for N in sorted(cfg.N)]

    def collect(label, records):
        scheme, N = label
        last = records[-1]
        rows.append({"N": N, "scheme": scheme, "l1_error": last.l1_error,
                     "linf_error": last.linf_error, "steps": len(records),
                     **gmres_stats(records)})
        result.runs.append({"N": N, "scheme": scheme,
                            "records": [r.as_dict() for r in records]})

    result.tables["errors"] = rows
    _execute(tasks, cfg, result, collect)
    for scheme in cfg.schemes:
        sel = [r for r in rows if r["scheme"] == scheme]
        result.summary[f"{scheme}_l1_exponent"] = -fit_exponent(
            [r["N"] for r in sel], [r["l1_error"] for r in sel])
    if {"crank-nicholson", "implicit-euler"} <= set(cfg.schemes):
        err = {(r["scheme"], r["N"]): r["l1_error"] for r in rows}
        result.summary["cn_below_ie"] = all(
            err["crank-nicholson", N] < err["implicit-euler", N] for N in cfg.N)
    return result


def run_iteration_study(cfg: ExperimentConfig) -> StudyResult:
    """GMRES/Newton statistics per (N, preconditioner) for either model."""
    result = StudyResult(cfg.kind)
    rows = []
    scheme = cfg.schemes[0]
    if cfg.kind == "sulfation-iterations":
        tasks = [((N, mode), _sulfation_run, (cfg, N, scheme, mode))
                 for mode in cfg.preconditioners for N in sorted(cfg.N)]
    else:
        tasks = [((N, mode), _porous_run, (cfg, N, scheme, mode, False))
                 for mode in cfg.preconditioners for N in sorted(cfg.N)]

    def collect(label, out):
        N, mode = label
        records = out[1] if isinstance(out, tuple) else out
        cycles = [r.mgm_cycles_avg for r in records if r.mgm_cycles_avg is not None]
        rows.append({"N": N, "preconditioner_mode": mode, **gmres_stats(records),
                     "mgm_cycles_avg": float(np.mean(cycles)) if cycles else None})
        result.runs.append({"N": N, "preconditioner_mode": mode,
                            "records": [r.as_dict() for r in records]})

    result.tables["iterations"] = rows
    _execute(tasks, cfg, result, collect)
    for mode in cfg.preconditioners:
        sel = [r for r in rows if r["preconditioner_mode"] == mode]
        avgs = [r["gmres_avg"] for r in sel]
        result.summary[f"{mode}_growth_exponent"] = fit_exponent([r["N"] for r in sel], avgs)
        result.summary[f"{mode}_spread"] = float(max(avgs) - min(avgs))
    return result


def run_sulfation_profile(cfg: ExperimentConfig) -> StudyResult:
    """Snapshots of ``s`` and ``c`` at the requested times."""
    result = StudyResult(cfg.kind)
    rows, rec_rows = [], []
    N = sorted(cfg.N)[-1]
    mode = cfg.preconditioners[0]
    tasks = [((N,), _sulfation_run, (cfg, N, cfg.schemes[0], mode, False, cfg.snapshot_times))]
    grid = sulfation.StaggeredGrid(N, 1, cfg.L)

    def collect(label, out):
        snapshots, records = out
        xs, xc = grid.node_coordinates(), grid.cell_coordinates()
        for t in sorted(snapshots):
            st = snapshots[t]
            for j in range(N):
                rows.append({"t": float(t), "j": j, "x_s": float(xs[j]), "s": float(st.s[j]),
                             "x_c": float(xc[j]), "c": float(st.c[j])})
        rec_rows.extend(_records_rows({"N": N}, records))
        result.runs.append({"N": N, "records": [r.as_dict() for r in records]})

    result.tables["profiles"] = rows
    result.tables["records"] = rec_rows
    _execute(tasks, cfg, result, collect)
    return result


def run_front_tracking(cfg: ExperimentConfig) -> StudyResult:
    """Front position per step and the trailing-window log-log slope."""
    result = StudyResult(cfg.kind)
    rows = []
    mode = cfg.preconditioners[0]
    tasks = [((N,), _sulfation_run, (cfg, N, cfg.schemes[0], mode, True)) for N in sorted(cfg.N)]

    def collect(label, out):
        (N,) = label
        _, records = out
        series = [(r.t, r.front) for r in records if r.front is not None]
        rows.extend({"N": N, "t": t, "x_front": x} for t, x in series)
        result.summary[f"slope_N{N}"] = sulfation.fit_front_slope(series, cfg.front_window)
        result.runs.append({"N": N, "records": [r.as_dict() for r in records]})

    result.tables["front"] = rows
    _execute(tasks, cfg, result, collect)
    return result


def run_sulfation_2d(cfg: ExperimentConfig) -> StudyResult:
    """2D run per preconditioner mode: per-step iterations and the final fields."""
    result = StudyResult(cfg.kind)
    it_rows, field_rows = [], []
    N = sorted(cfg.N)[0]
    tasks = [((mode,), _sulfation_run, (cfg, N, cfg.schemes[0], mode))
             for mode in cfg.preconditioners]
    grid = sulfation.StaggeredGrid(N, 2, cfg.L)

    def collect(label, out):
        (mode,) = label
        snapshots, records = out
        it_rows.extend(_records_rows({"preconditioner_mode": mode}, records))
        stats = gmres_stats(records)
        result.summary[f"{mode}_gmres_avg"] = stats["gmres_avg"]
        result.summary[f"{mode}_max_step_spread"] = int(
            max(r.gmres_max - r.gmres_min for r in records))
        result.runs.append({"preconditioner_mode": mode,
                            "records": [r.as_dict() for r in records]})
        if field_rows:
            return
        final = snapshots[cfg.T]
        c = final.c.reshape(grid.c_shape)
        s = final.s.reshape(grid.s_shape)
        xc, xs = grid.cell_coordinates(), grid.node_coordinates()
        for i in range(N):
            for j in range(N):
                field_rows.append({"i": i, "j": j, "x_c": float(xc[i]), "y_c": float(xc[j]),
                                   "c": float(c[i, j]), "x_s": float(xs[i]),
                                   "y_s": float(xs[j]), "s": float(s[i, j])})
        result.summary["c_symmetry_error"] = float(np.max(np.abs(c - c.T)))
        result.summary["c_corner"] = float(c[0, 0])
        result.summary["c_mid_edge"] = float(c[0, N // 2])

    result.tables["iterations"] = it_rows
    result.tables["fields"] = field_rows
    _execute(tasks, cfg, result, collect)
    return result


STUDIES = {
    "porous-convergence": run_porous_convergence,
    "porous-iterations": run_iteration_study,
    "sulfation-iterations": run_iteration_study,
    "sulfation-profile": run_sulfation_profile,
    "sulfation-front": run_front_tracking,
    "sulfation-2d": run_sulfation_2d,
}


def run_study(cfg: ExperimentConfig) -> StudyResult:
    return STUDIES[cfg.kind](cfg)
