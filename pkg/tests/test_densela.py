import math
from fractions import Fraction

import numpy as np
import pytest

from tsir.densela import (
    DenseVector,
    SingularMatrixError,
    axpy_update,
    dd_lu,
    dd_lu_solve,
    inf_norm,
    inf_norm_mat,
    kappa_inf,
    matrix,
    matvec,
    vector,
)
from tsir.precision import DOUBLE, HALF, QUAD_DD, SINGLE, dd_from, dd_sub, unit_roundoff


def test_matvec_identity_double():
    A = matrix(np.eye(3), DOUBLE)
    x = vector([1.0, 2.0, 3.0], DOUBLE)
    y = matvec(A, x, DOUBLE)
    assert np.array_equal(y.data, [1.0, 2.0, 3.0])


def test_matvec_small_integers_single():
    A = matrix([[1.0, 1.0], [0.0, 1.0]], SINGLE)
    x = vector([1.0, 1.0], SINGLE)
    y = matvec(A, x, SINGLE)
    assert np.array_equal(y.data, [2.0, 1.0])


def test_matvec_half_vs_exact_then_round_oracle():
    rng = np.random.default_rng(3)
    A = matrix(rng.standard_normal((5, 5)), HALF)
    x = vector(rng.standard_normal(5), HALF)
    y = matvec(A, x, HALF)
    # oracle: exact rational dot products; 9 rounded ops (5 mul + 4 add)
    # keep the error within 5u of the absolute sum (cancellation-safe form)
    u = unit_roundoff(HALF)
    for i in range(5):
        exact = sum(Fraction(A.data[i, j]) * Fraction(x.data[j]) for j in range(5))
        scale = sum(abs(Fraction(A.data[i, j]) * Fraction(x.data[j])) for j in range(5))
        err = abs(float(Fraction(y.data[i]) - exact))
        assert err <= 5 * u * float(scale)


def test_matvec_dimension_mismatch():
    with pytest.raises(ValueError):
        matvec(matrix(np.eye(3), DOUBLE), vector([1.0, 2.0], DOUBLE), DOUBLE)


def test_inf_norms():
    assert inf_norm(vector([1.0, -3.0, 2.0], DOUBLE)) == 3.0
    assert inf_norm(vector(np.zeros(4), DOUBLE)) == 0.0
    assert math.isnan(inf_norm(vector([1.0, math.nan], DOUBLE)))
    assert inf_norm_mat(matrix([[1.0, -2.0], [3.0, 4.0]], DOUBLE)) == 7.0


def test_inf_norm_triangle_inequality():
    rng = np.random.default_rng(5)
    for _ in range(50):
        u = rng.standard_normal(20)
        v = rng.standard_normal(20)
        lhs = inf_norm(vector(u + v, DOUBLE))
        rhs = inf_norm(vector(u, DOUBLE)) + inf_norm(vector(v, DOUBLE))
        assert lhs <= rhs + 1e-15


def test_axpy_update_basics():
    z = vector(np.zeros(2), DOUBLE)
    d = vector([1.0, 1.0], DOUBLE)
    assert np.array_equal(axpy_update(z, 1.0, d, DOUBLE).data, [1.0, 1.0])
    x = vector([1.0, 1.0], DOUBLE)
    assert np.array_equal(axpy_update(x, 0.0, d, DOUBLE).data, [1.0, 1.0])


def test_axpy_scaled_matches_unscaled_in_dd():
    # undoing the residual scaling inside the update loses essentially
    # nothing when carried out in double-word arithmetic
    from tsir.precision import dd_div, dd_from

    rng = np.random.default_rng(9)
    x = vector(rng.standard_normal(30), QUAD_DD)
    d = vector(rng.standard_normal(30), QUAD_DD)
    rnorm = 3.7519
    dsc = dd_div(d.as_dd(), dd_from(rnorm))
    d_scaled = DenseVector(np.asarray(dsc.hi), QUAD_DD, np.asarray(dsc.lo))
    a = axpy_update(x, rnorm, d_scaled, QUAD_DD)
    b = axpy_update(x, 1.0, d, QUAD_DD)
    diff = dd_sub(a.as_dd(), b.as_dd())
    num = np.max(np.abs(diff.hi + diff.lo))
    den = np.max(np.abs(b.data + b.lo))
    assert num / den <= 2.0**-100


def test_kappa_inf_identity():
    assert kappa_inf(matrix(np.eye(4), DOUBLE)) == pytest.approx(1.0, rel=1e-12)


def test_kappa_inf_diagonal():
    A = matrix(np.diag([1.0, 1e-5]), DOUBLE)
    assert kappa_inf(A) == pytest.approx(1e5, rel=1e-10)


def test_kappa_inf_scale_invariance():
    rng = np.random.default_rng(21)
    A = rng.standard_normal((30, 30))
    k1 = kappa_inf(matrix(A, DOUBLE))
    k2 = kappa_inf(matrix(4.0 * A, DOUBLE))
    assert abs(k1 - k2) / k1 <= 1e-8


def test_kappa_inf_singular():
    A = matrix([[1.0, 2.0], [2.0, 4.0]], DOUBLE)
    with pytest.raises(SingularMatrixError):
        kappa_inf(A)


def test_dd_lu_solve_roundtrip():
    rng = np.random.default_rng(33)
    A = matrix(rng.standard_normal((25, 25)), DOUBLE)
    x_true = rng.standard_normal(25)
    b = A.data @ x_true
    lu, perm = dd_lu(A)
    x = dd_lu_solve(lu, perm, dd_from(b))
    # double-word elimination solves a double-precision problem far past
    # binary64 accuracy
    assert np.max(np.abs(x.hi - x_true)) <= 1e-12
