import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from degparab.linalg import BandedMatrix, GMRESConfig
from degparab.newton import (EXPLICIT_EULER_AVERAGE, PREVIOUS_STEP, LinearSolveFailure,
                             NewtonConfig, NewtonDivergence, NonlinearProblem,
                             newton_solve, timestep_guard, warm_start)


def affine(b):
    return NonlinearProblem(lambda u: u - b, lambda u: (BandedMatrix.identity(len(b)), None),
                            len(b))


def squares(target=4.0, n=3):
    return NonlinearProblem(lambda u: u ** 2 - target,
                            lambda u: (BandedMatrix.diag(2 * u), None), n)


def test_affine_one_iteration(rng):
    b = rng.standard_normal(6)
    u, rep = newton_solve(affine(b), np.zeros(6), NewtonConfig(tol=1e-12))
    # the first increment is b itself; the stop needs a second, zero, increment
    assert np.allclose(u, b)
    assert rep.increment_norms[0] == pytest.approx(np.abs(b).max())
    assert rep.converged and rep.iterations == 2 and rep.increment_norms[1] <= 1e-12
    # one iteration already lands on b
    u1, _ = newton_solve(affine(b), np.zeros(6), NewtonConfig(max_iter=1))
    assert np.allclose(u1, b, rtol=0, atol=1e-12)


def test_exact_root_start():
    u, rep = newton_solve(squares(), np.full(3, 2.0))
    assert rep.iterations == 1 and rep.converged
    assert rep.increment_norms == [0.0]
    assert np.array_equal(u, [2.0, 2.0, 2.0])


def test_quadratic_convergence_towards_two():
    u, rep = newton_solve(squares(), np.full(3, 3.0), NewtonConfig(tol=1e-14),
                          GMRESConfig(rtol=1e-14))
    assert np.allclose(u, 2.0, rtol=0, atol=1e-14)
    inc = np.array(rep.increment_norms)
    # scalar oracle: e_{k+1} = e_k^2 / (2 u_k), so inc_{k+1} / inc_k^2 -> 1/4
    ratios = inc[1:4] / inc[:3] ** 2
    assert np.all((ratios > 0.15) & (ratios < 0.3))
    u_ref = 3.0
    for k in range(4):
        step = (u_ref ** 2 - 4) / (2 * u_ref)
        assert inc[k] == pytest.approx(step, rel=1e-10)
        u_ref -= step


def test_max_iter_reports_not_converged():
    _, rep = newton_solve(squares(), np.full(3, 30.0), NewtonConfig(max_iter=2))
    assert rep.iterations == 2 and not rep.converged


def test_non_finite_residual():
    p = NonlinearProblem(lambda u: np.log(u), lambda u: (BandedMatrix.diag(1 / u), None), 2)
    with pytest.raises(NewtonDivergence), np.errstate(invalid="ignore"):
        newton_solve(p, np.array([-1.0, 1.0]))


def test_non_finite_initial_guess():
    with pytest.raises(NewtonDivergence):
        newton_solve(squares(), np.array([1.0, np.nan, 1.0]))


def test_linear_failure_carries_iteration():
    hard = NonlinearProblem(lambda u: u - 1.0,
                            lambda u: (np.diag(np.arange(1.0, 41.0)), None), 40)
    with pytest.raises(LinearSolveFailure, match="Newton iteration 1"):
        newton_solve(hard, np.zeros(40), linear=GMRESConfig(rtol=1e-12, max_iter=2))


def test_wrong_shape():
    with pytest.raises(ValueError):
        newton_solve(squares(), np.ones(4))


@pytest.mark.parametrize("kwargs", [dict(tol=0.0), dict(max_iter=0), dict(warm_start="x")])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        NewtonConfig(**kwargs)


def test_config_defaults():
    cfg = NewtonConfig()
    assert cfg.tol == 1e-6 and cfg.max_iter == 30 and cfg.warm_start == PREVIOUS_STEP


def test_warm_start_modes(rng):
    u = rng.standard_normal(5)
    out = warm_start(u, PREVIOUS_STEP)
    assert np.array_equal(out, u) and out is not u
    # no diffusion: the explicit step is the identity
    assert np.array_equal(warm_start(u, EXPLICIT_EULER_AVERAGE, lambda v: v), u)
    assert np.allclose(warm_start(u, EXPLICIT_EULER_AVERAGE, lambda v: v + 2.0), u + 1.0)
    with pytest.raises(ValueError):
        warm_start(u, EXPLICIT_EULER_AVERAGE)


def test_timestep_guard_examples():
    h = 0.1
    assert timestep_guard(h, h, 1.0)
    assert not timestep_guard(2 * h, h, 1.0)
    assert timestep_guard(0.5 * h, h, 1.0)
    with pytest.raises(ValueError):
        timestep_guard(0.0, h, 1.0)


@given(target=st.floats(0.5, 50), start=st.floats(1.0, 20), n=st.integers(1, 8))
def test_converged_runs_end_smaller(target, start, n):
    start = max(start, np.sqrt(target) * 1.01)
    u, rep = newton_solve(squares(target, n), np.full(n, start))
    assert rep.converged
    assert len(rep.increment_norms) == rep.iterations
    assert rep.increment_norms[-1] < rep.increment_norms[0]
    assert np.allclose(u, np.sqrt(target), rtol=1e-6)
