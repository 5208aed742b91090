import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from perfact.sparse_core import (CsrMatrix, FactorizationError, RestrictionOp, cg_condition_estimate,
                                 dense_gevp, factor_solve, factorize, galerkin_product,
                                 lanczos_from_cg, read_matrix_market, shift_combine, spmv,
                                 write_matrix_market)


def test_csr_invariants_sum_duplicates_and_sorted():
    A = CsrMatrix.from_coo([0, 0, 1, 0], [1, 0, 0, 1], [1.0, 2.0, 3.0, 4.0], (2, 2))
    assert A.row_offsets[0] == 0 and A.row_offsets[-1] == len(A.values)
    assert np.array_equal(A.col_indices, [0, 1, 0])
    assert np.allclose(A.toarray(), [[2, 5], [3, 0]])
    with pytest.raises(ValueError):
        A.values[0] = 1.0


def test_symmetry_check():
    assert CsrMatrix.from_dense([[2, -1], [-1, 2]]).check_symmetric()
    assert not CsrMatrix.from_dense([[2, -1], [0, 2]]).check_symmetric()


@pytest.mark.parametrize("A,x,y", [
    (np.eye(3), [1, 2, 3], [1, 2, 3]),
    (np.zeros((2, 2)), [5, -1], [0, 0]),
    ([[2, -1], [-1, 2]], [1, 1], [1, 1]),
])
def test_spmv_examples(A, x, y):
    assert np.allclose(spmv(CsrMatrix.from_dense(A), x), y)


def test_spmv_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        spmv(CsrMatrix.identity(3), np.ones(2))


def test_shift_combine_examples():
    A = CsrMatrix.from_dense(np.diag([3.0, 5.0]))
    I = CsrMatrix.identity(2)
    assert np.array_equal(shift_combine(A, I, 0.0).toarray(), A.toarray())
    assert np.array_equal(shift_combine(I, I, 1.0).toarray(), np.zeros((2, 2)))
    assert np.array_equal(shift_combine(A, I, 2.0).toarray(), np.diag([1.0, 3.0]))
    with pytest.raises(ValueError):
        shift_combine(A, CsrMatrix.identity(3), 1.0)


def test_galerkin_examples():
    A = CsrMatrix.from_dense(np.diag([4.0, 7.0]))
    assert np.array_equal(galerkin_product(RestrictionOp.select([0, 1], 2), A).toarray(), A.toarray())
    assert np.array_equal(galerkin_product(RestrictionOp.select([0], 2), A).toarray(), [[4.0]])
    R = RestrictionOp.weighted(np.array([[1.0, 1.0]]))
    assert np.allclose(galerkin_product(R, CsrMatrix.identity(2)).toarray(), [[2.0]])


def test_restriction_extend_is_transpose(rng):
    R = RestrictionOp.select([3, 0, 5], 6)
    x, y = rng.standard_normal(6), rng.standard_normal(3)
    assert np.isclose(R.apply(x) @ y, x @ R.extend(y))
    assert np.allclose(R.as_matrix().toarray() @ x, R.apply(x))


def _q1_laplacian_3x3():
    k = np.array([[2.0, -1, 0], [-1, 2, -1], [0, -1, 2]]) * 4
    m = np.array([[4.0, 1, 0], [1, 4, 1], [0, 1, 4]]) / 24
    return np.kron(k, m) + np.kron(m, k)


@pytest.mark.parametrize("M,b,x", [
    (np.eye(3), [1.0, -2.0, 3.0], [1.0, -2.0, 3.0]),
    (np.diag([2.0, 4.0]), [2.0, 4.0], [1.0, 1.0]),
])
def test_factor_solve_examples(M, b, x):
    assert np.allclose(factor_solve(factorize(M), b), x)


def test_factor_solve_q1_laplacian():
    M = _q1_laplacian_3x3()
    x = factor_solve(factorize(CsrMatrix.from_dense(M)), np.ones(9))
    assert np.allclose(x, np.linalg.solve(M, np.ones(9)), atol=1e-10)


def test_factorize_reports_pivot():
    M = np.diag([1.0, 2.0, -1.0, 4.0])
    with pytest.raises(FactorizationError) as err:
        factorize(M)
    assert err.value.pivot_index == 2


def test_factorize_singular():
    with pytest.raises(FactorizationError):
        factorize(np.array([[1.0, 1.0], [1.0, 1.0]]))


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 25), seed=st.integers(0, 2 ** 31 - 1))
def test_factor_solve_random_spd(n, seed):
    r = np.random.default_rng(seed)
    S = sp.random(n, n, density=0.3, random_state=r).toarray()
    M = S @ S.T + n * np.eye(n)
    b = r.standard_normal(n)
    x = factorize(CsrMatrix.from_dense(M)).solve(b)
    assert np.linalg.norm(M @ x - b) <= 1e-10 * np.linalg.norm(b) * n


@pytest.mark.parametrize("A,B,lam", [
    (np.diag([1.0, 2.0]), np.eye(2), [1, 2]),
    (np.diag([3.0, 5.0]), np.diag([3.0, 5.0]), [1, 1]),
    ([[2.0, -1], [-1, 2]], np.eye(2), [1, 3]),
])
def test_dense_gevp_examples(A, B, lam):
    w, V = dense_gevp(A, B)
    assert np.allclose(w, lam)
    assert np.allclose(V.T @ np.asarray(B) @ V, np.eye(2))


def test_dense_gevp_rejects_indefinite_B():
    with pytest.raises(np.linalg.LinAlgError):
        dense_gevp(np.eye(2), np.diag([1.0, 0.0]))


def test_condition_estimates():
    e = cg_condition_estimate(np.eye(3), None, np.ones(3), 5)
    assert np.isclose(e.kappa, 1.0) and e.steps == 1
    e = cg_condition_estimate(np.diag([1.0, 4.0]), None, np.array([1.0, 1.0]), 2)
    assert abs(e.kappa - 4.0) <= 1e-8
    D = np.diag(np.arange(1.0, 11.0))
    e = cg_condition_estimate(D, np.linalg.inv(D), np.ones(10), 10)
    assert np.isclose(e.kappa, 1.0)


def test_lanczos_matches_spectrum(rng):
    d = np.linspace(1.0, 50.0, 30)
    A = np.diag(d)
    e = cg_condition_estimate(A, None, rng.standard_normal(30), 30)
    assert abs(e.lambda_min - 1.0) < 1e-6 and abs(e.lambda_max - 50.0) < 1e-6
    with pytest.raises(ValueError):
        lanczos_from_cg([], [])


def test_matrix_market_roundtrip(tmp_path):
    A = CsrMatrix.from_dense(_q1_laplacian_3x3(), symmetric=True)
    write_matrix_market(A, tmp_path / "a.mtx")
    B = read_matrix_market(tmp_path / "a.mtx")
    assert B.symmetric and np.array_equal(A.toarray(), B.toarray())
