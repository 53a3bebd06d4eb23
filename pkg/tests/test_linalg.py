import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from degparab.linalg import (BandedMatrix, GMRESBreakdown, GMRESConfig, LinearOperator,
                             SingularMatrixError, banded_matvec, dense_solve, gmres,
                             lu_factor, lu_solve)


def random_banded(rng, n, offsets):
    offsets = sorted(set(k for k in offsets if abs(k) < n))
    return BandedMatrix(n, offsets, [rng.standard_normal(n - abs(k)) for k in offsets])


def well_conditioned(rng, n):
    return rng.standard_normal((n, n)) + n * np.eye(n)


# -- BandedMatrix ---------------------------------------------------------

def test_identity_matvec():
    assert np.array_equal(banded_matvec(BandedMatrix.identity(3), np.array([1.0, 2, 3])),
                          [1.0, 2, 3])


def test_laplacian_stencil_on_constant():
    a = BandedMatrix.tridiag(np.ones(2), -2 * np.ones(3), np.ones(2))
    assert np.array_equal(a @ np.ones(3), [-1.0, 0.0, -1.0])


def test_random_tridiagonal_against_dense(rng):
    a = random_banded(rng, 8, [-1, 0, 1])
    x = rng.standard_normal(8)
    ref = a.to_dense() @ x
    assert np.allclose(a @ x, ref, rtol=1e-14, atol=1e-14 * np.abs(ref).max())


def test_storage_layout():
    # offset k stores A[j, j+k]
    a = BandedMatrix(3, [-1, 0, 2], [[10.0, 20.0], [1.0, 2.0, 3.0], [7.0]])
    dense = a.to_dense()
    assert dense[1, 0] == 10 and dense[2, 1] == 20 and dense[0, 2] == 7
    assert np.array_equal(np.diag(dense), [1, 2, 3])


def test_rejects_bad_diagonal_length():
    with pytest.raises(ValueError):
        BandedMatrix(4, [0, 1], [np.ones(4), np.ones(4)])


def test_rejects_duplicate_offsets():
    with pytest.raises(ValueError):
        BandedMatrix(3, [0, 0], [np.ones(3), np.ones(3)])


def test_symmetric_flag_is_verified():
    with pytest.raises(ValueError):
        BandedMatrix(3, [-1, 0, 1], [[1.0, 1.0], np.ones(3), [2.0, 1.0]], symmetric=True)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        banded_matvec(BandedMatrix.identity(3), np.ones(4))


def test_sparse_round_trip(rng):
    a = random_banded(rng, 12, [-4, -1, 0, 1, 3])
    b = BandedMatrix.from_sparse(a.to_sparse())
    assert np.array_equal(a.to_dense(), b.to_dense())


def test_arithmetic(rng):
    a = random_banded(rng, 6, [-1, 0, 1])
    b = random_banded(rng, 6, [0, 2])
    w = rng.standard_normal(6)
    assert np.allclose((a + b).to_dense(), a.to_dense() + b.to_dense())
    assert np.allclose((a - b).to_dense(), a.to_dense() - b.to_dense())
    assert np.allclose((2.5 * a).to_dense(), 2.5 * a.to_dense())
    assert np.allclose(a.scale_columns(w).to_dense(), a.to_dense() * w)
    assert np.allclose(a.scale_rows(w).to_dense(), w[:, None] * a.to_dense())
    assert np.allclose(a.T.to_dense(), a.to_dense().T)


@given(n=st.integers(1, 64), seed=st.integers(0, 2**31 - 1),
       offsets=st.lists(st.integers(-63, 63), min_size=1, max_size=6))
def test_matvec_matches_dense(n, seed, offsets):
    rng = np.random.default_rng(seed)
    a = random_banded(rng, n, offsets + [0])
    x = rng.standard_normal(n)
    ref = a.to_dense() @ x
    scale = np.abs(a.to_dense()).sum(axis=1) @ np.ones(n) * np.abs(x).max() + 1e-300
    assert np.max(np.abs(a @ x - ref)) <= 1e-14 * scale


# -- LinearOperator -------------------------------------------------------

@given(seed=st.integers(0, 2**31 - 1), alpha=st.floats(-10, 10), beta=st.floats(-10, 10))
def test_operator_is_linear(seed, alpha, beta):
    rng = np.random.default_rng(seed)
    a = random_banded(rng, 20, [-2, 0, 1]).as_operator()
    x, y = rng.standard_normal(20), rng.standard_normal(20)
    lhs = a(alpha * x + beta * y)
    rhs = alpha * a(x) + beta * a(y)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * (1 + np.abs(rhs).max()))


def test_operator_dimension():
    op = LinearOperator(3, lambda v: 2 * v)
    assert op.dimension == 3
    assert np.array_equal(op(np.ones(3)), [2.0, 2.0, 2.0])


# -- dense LU -------------------------------------------------------------

def test_dense_identity():
    assert np.array_equal(dense_solve(np.eye(2), [3.0, 4.0]), [3.0, 4.0])


def test_dense_diagonal():
    assert np.allclose(dense_solve(np.diag([2.0, 4.0]), [2.0, 8.0]), [1.0, 2.0])


def test_dense_random_residual(rng):
    a = rng.standard_normal((16, 16)) + 4 * np.eye(16)
    b = rng.standard_normal(16)
    x = dense_solve(a, b)
    assert np.max(np.abs(a @ x - b)) <= 1e-10 * np.max(np.abs(b))


def test_dense_needs_pivoting():
    a = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert np.allclose(dense_solve(a, [2.0, 3.0]), [3.0, 2.0])


def test_dense_singular():
    with pytest.raises(SingularMatrixError):
        dense_solve(np.array([[1.0, 2.0], [2.0, 4.0]]), [1.0, 1.0])


def test_lu_reuse(rng):
    a = well_conditioned(rng, 10)
    lu = lu_factor(a)
    for _ in range(3):
        b = rng.standard_normal(10)
        assert np.allclose(a @ lu_solve(lu, b), b)


# -- GMRES ----------------------------------------------------------------

def test_gmres_identity_one_iteration(rng):
    b = rng.standard_normal(10)
    x, rep = gmres(BandedMatrix.identity(10), b)
    assert rep.iterations == 1 and rep.converged
    assert np.allclose(x, b)


def test_gmres_spd_tridiagonal_against_dense():
    n = 8
    a = BandedMatrix.tridiag(-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1))
    b = np.zeros(n)
    b[0] = 1.0
    x, rep = gmres(a, b, rtol=1e-12)
    assert rep.converged
    assert np.allclose(x, dense_solve(a.to_dense(), b), atol=1e-10)


def test_gmres_zero_rhs():
    x, rep = gmres(BandedMatrix.identity(4), np.zeros(4))
    assert rep.iterations == 0 and rep.converged and np.all(x == 0)


def test_gmres_reports_nonconvergence(rng):
    a = well_conditioned(rng, 30) - 25 * np.eye(30)
    x, rep = gmres(a, rng.standard_normal(30), rtol=1e-12, max_iter=3)
    assert rep.iterations == 3 and not rep.converged


def test_gmres_breakdown_without_solution():
    # singular A with b outside its range: the Krylov space stalls
    a = np.diag([1.0, 0.0])
    with pytest.raises(GMRESBreakdown):
        gmres(a, np.array([0.0, 1.0]))


def test_gmres_left_preconditioner_minimises_preconditioned_residual(rng):
    a = well_conditioned(rng, 20)
    M_dense = np.linalg.inv(np.diag(np.diag(a)))
    b = rng.standard_normal(20)
    x, rep = gmres(a, b, M=lambda r: M_dense @ r, rtol=1e-10)
    assert rep.converged
    assert np.linalg.norm(M_dense @ (b - a @ x)) <= 1e-10 * rep.residual_history[0] * 1.0001


def test_gmres_exact_preconditioner_one_iteration(rng):
    a = well_conditioned(rng, 15)
    ainv = np.linalg.inv(a)
    _, rep = gmres(a, rng.standard_normal(15), M=lambda r: ainv @ r, rtol=1e-10)
    assert rep.iterations == 1


def test_gmres_accepts_sparse_and_callable(rng):
    a = well_conditioned(rng, 12)
    b = rng.standard_normal(12)
    x1, _ = gmres(sp.csr_matrix(a), b, rtol=1e-12)
    x2, _ = gmres(lambda v: a @ v, b, rtol=1e-12)
    assert np.allclose(x1, x2)


def test_gmres_config_defaults():
    assert GMRESConfig().rtol == 1e-6
    with pytest.raises(ValueError):
        GMRESConfig(rtol=0.0)


@given(n=st.integers(1, 32), seed=st.integers(0, 2**31 - 1))
def test_gmres_exact_at_full_dimension(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n)) + 2 * np.sqrt(n) * np.eye(n)
    b = rng.standard_normal(n)
    x, _ = gmres(a, b, rtol=1e-12, max_iter=n)
    ref = dense_solve(a, b)
    assert np.linalg.norm(x - ref) <= 1e-8 * np.linalg.norm(ref)


@given(n=st.integers(2, 40), seed=st.integers(0, 2**31 - 1))
def test_gmres_history_non_increasing(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n)) + np.sqrt(n) * np.eye(n)
    _, rep = gmres(a, rng.standard_normal(n), rtol=1e-10)
    hist = np.array(rep.residual_history)
    assert np.all(np.diff(hist) <= 1e-12 * hist[0])
