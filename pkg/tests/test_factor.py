import numpy as np
import pytest

from tsir.densela import dd_lu, dd_lu_solve, inf_norm, inf_norm_mat, matrix, matvec, vector
from tsir.factor import factor_with_retry, has_nonfinite, lu_factor, squeeze_scale, tri_solve
from tsir.precision import (
    DOUBLE,
    HALF,
    QUAD_DD,
    SINGLE,
    DoubleWord,
    dd_from,
    dd_mul,
    dd_sub,
    unit_roundoff,
)


def reconstruct_residual_dd(F, A_ref):
    """|| P@A - L@U ||_inf / ||A||_inf with the product evaluated in
    double-word arithmetic (independent of the factorization path)."""
    n = F.n
    lu = F.lu.data
    L = np.tril(lu, -1) + np.eye(n)
    U = np.triu(lu)
    acc = DoubleWord(np.zeros((n, n)), np.zeros((n, n)))
    from tsir.precision import dd_add

    for k in range(n):
        prod = dd_mul(dd_from(np.ascontiguousarray(L[:, k])[:, None]),
                      dd_from(np.ascontiguousarray(U[k, :])[None, :]))
        acc = dd_add(acc, prod)
    diff = dd_sub(acc, dd_from(A_ref[F.perm]))
    resid = np.max(np.abs(diff.hi + diff.lo), axis=None)
    return resid / np.max(np.abs(A_ref).sum(axis=1))


def test_lu_identity_half():
    F = lu_factor(matrix(np.eye(4), HALF), HALF)
    assert np.array_equal(F.lu.data, np.eye(4))
    assert np.array_equal(F.perm, np.arange(4))


def test_lu_pivoting_forced_by_zero():
    F = lu_factor(matrix([[0.0, 1.0], [1.0, 0.0]], DOUBLE), DOUBLE)
    assert np.array_equal(F.perm, [1, 0])
    assert np.array_equal(F.lu.data, np.eye(2))


def test_lu_permutation_valid():
    rng = np.random.default_rng(0)
    for fmt in (HALF, SINGLE, DOUBLE):
        F = lu_factor(matrix(rng.standard_normal((12, 12)), fmt), fmt)
        assert sorted(F.perm.tolist()) == list(range(12))


@pytest.mark.parametrize("fmt,nmat", [(HALF, 15), (SINGLE, 15), (DOUBLE, 15)])
def test_lu_reconstruction_bound(fmt, nmat):
    rng = np.random.default_rng(42)
    n = 10
    for _ in range(nmat):
        A = matrix(rng.standard_normal((n, n)), fmt)
        F = lu_factor(A, fmt)
        rel = reconstruct_residual_dd(F, A.data)
        assert rel <= 10 * n * unit_roundoff(fmt)


def test_has_nonfinite():
    assert has_nonfinite(vector([1.0, np.inf], DOUBLE))
    assert not has_nonfinite(vector([1.0, 2.0], DOUBLE))
    assert has_nonfinite(np.array([np.nan]))


def test_half_overflow_matrix_factors_nonfinite():
    # entries ~1e5 exceed the half-precision range already at rounding
    rng = np.random.default_rng(1)
    A = rng.standard_normal((6, 6)) * 1e5
    F = lu_factor(matrix(A, DOUBLE), HALF)
    assert has_nonfinite(F.lu)


def test_squeeze_scale_identity():
    A = matrix(np.eye(3), DOUBLE)
    r, c, mu, A_scaled = squeeze_scale(A, HALF, theta=0.1)
    assert np.allclose(r, 1.0) and np.allclose(c, 1.0)
    assert mu == pytest.approx(0.1 * 65504.0)
    nz = A_scaled.data[A_scaled.data != 0.0]
    assert np.allclose(nz, np.float16(0.1 * 65504.0))


def test_squeeze_scale_extreme_diagonal():
    A = matrix(np.diag([1e6, 1e-6]), DOUBLE)
    r, c, mu, A_scaled = squeeze_scale(A, HALF, theta=0.1)
    assert not has_nonfinite(A_scaled)
    assert np.max(np.abs(A_scaled.data)) <= 0.1 * 65504.0 * (1 + 2**-10)


def test_squeeze_equilibrates_within_factor_two():
    rng = np.random.default_rng(2)
    for _ in range(20):
        A = rng.standard_normal((8, 8)) * np.exp(rng.uniform(-8, 8, (8, 8)))
        r, c, mu, A_scaled = squeeze_scale(matrix(A, DOUBLE), HALF)
        equil = np.abs(A * r[:, None] * c[None, :])
        rows = equil.max(axis=1)
        cols = equil.max(axis=0)
        assert rows.max() / rows.min() <= 4.0
        assert cols.max() / cols.min() <= 4.0


def test_squeeze_rejects_zero_row():
    A = matrix([[0.0, 0.0], [1.0, 2.0]], DOUBLE)
    with pytest.raises(ValueError):
        squeeze_scale(A, HALF)


def test_factor_with_retry_well_scaled():
    rng = np.random.default_rng(3)
    F = factor_with_retry(matrix(rng.standard_normal((8, 8)), DOUBLE), HALF)
    assert not F.scaled and not F.failed


def test_factor_with_retry_rescues_overflow():
    rng = np.random.default_rng(4)
    A = matrix(rng.standard_normal((8, 8)) * 1e5, DOUBLE)
    F = factor_with_retry(A, HALF)
    assert F.scaled
    assert not F.failed
    assert not has_nonfinite(F.lu)


def test_factor_with_retry_squeeze_disabled_flags_failure():
    rng = np.random.default_rng(5)
    A = matrix(rng.standard_normal((8, 8)) * 1e5, DOUBLE)
    F = factor_with_retry(A, HALF, squeeze=False)
    assert F.failed
    assert has_nonfinite(F.lu)


def test_tri_solve_identity():
    F = lu_factor(matrix(np.eye(2), DOUBLE), DOUBLE)
    x = tri_solve(F, vector([1.0, 2.0], DOUBLE), DOUBLE)
    assert np.array_equal(x.data, [1.0, 2.0])


def test_tri_solve_diagonal():
    F = lu_factor(matrix([[2.0, 0.0], [0.0, 4.0]], DOUBLE), DOUBLE)
    x = tri_solve(F, vector([2.0, 4.0], DOUBLE), DOUBLE)
    assert np.array_equal(x.data, [1.0, 1.0])


def test_tri_solve_accuracy_double():
    rng = np.random.default_rng(6)
    n = 20
    A = matrix(rng.standard_normal((n, n)), DOUBLE)
    x_true = rng.standard_normal(n)
    b = vector(A.data @ x_true, DOUBLE)
    F = lu_factor(A, DOUBLE)
    x = tri_solve(F, b, DOUBLE)
    # exact solution via double-word elimination
    lu, perm = dd_lu(A)
    xref = dd_lu_solve(lu, perm, dd_from(b.data))
    from tsir.densela import kappa_inf

    kappa = kappa_inf(A)
    rel = np.max(np.abs(x.data - xref.hi)) / np.max(np.abs(xref.hi))
    assert rel <= 1e3 * n * kappa * unit_roundoff(DOUBLE)


def test_tri_solve_scaled_factors_round_trip():
    rng = np.random.default_rng(7)
    A = matrix(rng.standard_normal((10, 10)) * 1e5, DOUBLE)
    F = factor_with_retry(A, HALF)
    assert F.scaled
    b = vector(rng.standard_normal(10), DOUBLE)
    x = tri_solve(F, b, DOUBLE)  # wide arithmetic, half factors
    resid = inf_norm(vector(b.data - A.data @ x.data, DOUBLE))
    # half-precision factors limit accuracy; sanity band only
    assert resid / (inf_norm_mat(A) * inf_norm(x)) <= 10 * 10 * unit_roundoff(HALF)


def test_tri_solve_dd_rhs():
    rng = np.random.default_rng(8)
    A = matrix(rng.standard_normal((12, 12)), DOUBLE)
    F = lu_factor(A, DOUBLE)
    b = vector(rng.standard_normal(12), QUAD_DD)
    x = tri_solve(F, b, QUAD_DD)
    assert x.fmt is QUAD_DD
    resid = np.abs(b.data - A.data @ (x.data + x.lo)).max()
    assert resid <= 1e-13 * inf_norm_mat(A) * inf_norm(x)
