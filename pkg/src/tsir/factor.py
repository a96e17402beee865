"""LU factorization and triangular solves at a simulated precision.

Gaussian elimination with partial pivoting, every arithmetic operation
rounded in the factorization format.  Overflow to Inf or NaN is *not* an
error here: low-precision factorization is allowed to blow up, and the
refinement driver decides what to do about it.  For half precision a
two-sided "squeeze" scaling can rescue matrices whose entries exceed the
format range; `factor_with_retry` first tries the plain factorization
and only then the scaled one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .densela import DenseMatrix, DenseVector, matrix
from .precision import (
    DOUBLE,
    QUAD_DD,
    DoubleWord,
    PrecisionFormat,
    dd_div,
    dd_from,
    dd_mul,
    dd_sub,
    round_array,
)

__all__ = [
    "LUFactors",
    "lu_factor",
    "has_nonfinite",
    "squeeze_scale",
    "factor_with_retry",
    "tri_solve",
]


@dataclass
class LUFactors:
    """Packed unit-lower/upper factors of (mu * R @ A @ S)[perm].

    When `scaled` is False, R and S are all-ones and mu == 1.  `failed`
    marks a factorization that still contains Inf/NaN after the scaled
    retry (or with the retry disabled); callers must treat such factors
    as unusable for the initial solve.
    """

    n: int
    fmt_f: PrecisionFormat
    lu: DenseMatrix
    perm: np.ndarray
    row_scale: np.ndarray
    col_scale: np.ndarray
    mu: float = 1.0
    scaled: bool = False
    failed: bool = False


def lu_factor(A: DenseMatrix, fmt_f: PrecisionFormat) -> LUFactors:
    """Right-looking GEPP with per-operation rounding in fmt_f.

    The pivot is the max-magnitude entry of the active column, ties
    broken by the smallest row index (np.argmax convention).  Inf/NaN
    entries are legal in the output; nothing is raised here.
    """
    n = A.n_rows
    if n != A.n_cols:
        raise ValueError("lu_factor expects a square matrix")
    work = round_array(A.data, fmt_f)
    perm = np.arange(n)
    with np.errstate(all="ignore"):
        for k in range(n - 1):
            p = k + int(np.argmax(np.abs(work[k:, k])))
            if p != k:
                work[[k, p], :] = work[[p, k], :]
                perm[[k, p]] = perm[[p, k]]
            col = round_array(work[k + 1:, k] / work[k, k], fmt_f)
            work[k + 1:, k] = col
            prod = round_array(np.outer(col, work[k, k + 1:]), fmt_f)
            work[k + 1:, k + 1:] = round_array(work[k + 1:, k + 1:] - prod, fmt_f)
    ones = np.ones(n)
    return LUFactors(n=n, fmt_f=fmt_f, lu=DenseMatrix(work, fmt_f),
                     perm=perm, row_scale=ones, col_scale=ones.copy())


def has_nonfinite(x: Union[DenseMatrix, DenseVector, np.ndarray]) -> bool:
    """True iff any entry is +/-Inf or NaN."""
    if isinstance(x, (DenseMatrix, DenseVector)):
        if x.lo is not None and not np.all(np.isfinite(x.lo)):
            return True
        x = x.data
    return not bool(np.all(np.isfinite(x)))


def squeeze_scale(A: DenseMatrix, fmt_f: PrecisionFormat, theta: float = 0.1):
    """Two-sided equilibration plus a range stretch for a narrow format.

    Alternating row/column sup-norm scaling (at most 10 sweeps, stopping
    once every row and column norm lies in [0.5, 2]) followed by
    mu = theta * max_finite / max|R A S|, so the scaled matrix fills the
    format range with headroom theta against elimination growth.

    Returns (row_scale, col_scale, mu, A_scaled) with A_scaled rounded to
    fmt_f and guaranteed free of overflow.  Raises ValueError for a
    matrix with a zero row or column.
    """
    data = np.abs(np.asarray(A.data, dtype=np.float64))
    n, m = data.shape
    if np.any(data.max(axis=1) == 0.0):
        raise ValueError("squeeze_scale: matrix has a zero row")
    if np.any(data.max(axis=0) == 0.0):
        raise ValueError("squeeze_scale: matrix has a zero column")
    r = np.ones(n)
    c = np.ones(m)
    for _ in range(10):
        rows = data.max(axis=1)
        r /= rows
        data /= rows[:, None]
        cols = data.max(axis=0)
        c /= cols
        data /= cols[None, :]
        rows = data.max(axis=1)
        cols = data.max(axis=0)
        if (rows.min() >= 0.5 and rows.max() <= 2.0
                and cols.min() >= 0.5 and cols.max() <= 2.0):
            break
    scaled = A.data * r[:, None] * c[None, :]
    mu = theta * fmt_f.max_finite / float(np.max(np.abs(scaled)))
    A_scaled = matrix(mu * scaled, fmt_f)
    return r, c, mu, A_scaled


def factor_with_retry(A: DenseMatrix, fmt_f: PrecisionFormat,
                      theta: float = 0.1, squeeze: bool = True) -> LUFactors:
    """Factor A, retrying with squeeze scaling if the factors blew up.

    The unscaled factorization is attempted first; if its factors contain
    Inf/NaN and squeezing is enabled, the factorization is redone on the
    squeeze-scaled matrix.  If the factors are still nonfinite (or the
    matrix cannot be equilibrated), the result carries failed=True.
    """
    F = lu_factor(A, fmt_f)
    if not has_nonfinite(F.lu):
        return F
    if squeeze:
        try:
            r, c, mu, A_scaled = squeeze_scale(A, fmt_f, theta)
        except ValueError:
            F.failed = True
            return F
        F2 = lu_factor(A_scaled, fmt_f)
        F2.row_scale = r
        F2.col_scale = c
        F2.mu = mu
        F2.scaled = True
        F2.failed = has_nonfinite(F2.lu)
        return F2
    F.failed = True
    return F


def tri_solve(F: LUFactors, rhs: DenseVector, fmt: PrecisionFormat) -> DenseVector:
    """Solve via the stored factors, all arithmetic rounded in fmt.

    Applies the row scaling and permutation, forward- and back-
    substitutes the packed factors, then applies the column scaling.
    fmt may be wider than the factorization format (preconditioner
    application inside GMRES) or equal to it (the plain correction
    solve).  Inf/NaN propagate to the caller.
    """
    if rhs.n != F.n:
        raise ValueError("tri_solve: dimension mismatch")
    if fmt is QUAD_DD:
        return _tri_solve_dd(F, rhs)
    lu = round_array(F.lu.data, fmt)
    b = round_array(rhs.data, fmt)
    with np.errstate(all="ignore"):
        if F.scaled:
            b = round_array(b * F.row_scale, fmt)
            b = round_array(b * F.mu, fmt)
        b = b[F.perm]
        n = F.n
        for j in range(n - 1):  # L, unit diagonal
            b[j + 1:] = round_array(b[j + 1:] - round_array(lu[j + 1:, j] * b[j], fmt), fmt)
        for j in range(n - 1, -1, -1):  # U
            b[j] = round_array(np.asarray(b[j] / lu[j, j]), fmt)
            if j:
                b[:j] = round_array(b[:j] - round_array(lu[:j, j] * b[j], fmt), fmt)
        if F.scaled:
            b = round_array(b * F.col_scale, fmt)
    return DenseVector(b, fmt)


def _tri_solve_dd(F: LUFactors, rhs: DenseVector) -> DenseVector:
    lu = dd_from(F.lu.data)
    x = rhs.as_dd()
    hi = np.array(x.hi, dtype=np.float64)
    lo = np.array(x.lo, dtype=np.float64)
    if F.scaled:
        s = dd_mul(DoubleWord(hi, lo), dd_from(F.row_scale))
        s = dd_mul(s, dd_from(float(F.mu)))
        hi, lo = np.asarray(s.hi), np.asarray(s.lo)
    hi, lo = hi[F.perm], lo[F.perm]
    n = F.n
    for j in range(n - 1):
        prod = dd_mul(DoubleWord(lu.hi[j + 1:, j], lu.lo[j + 1:, j]),
                      DoubleWord(hi[j], lo[j]))
        upd = dd_sub(DoubleWord(hi[j + 1:], lo[j + 1:]), prod)
        hi[j + 1:], lo[j + 1:] = upd.hi, upd.lo
    for j in range(n - 1, -1, -1):
        xj = dd_div(DoubleWord(hi[j], lo[j]), DoubleWord(lu.hi[j, j], lu.lo[j, j]))
        hi[j], lo[j] = xj.hi, xj.lo
        if j:
            prod = dd_mul(DoubleWord(lu.hi[:j, j], lu.lo[:j, j]), xj)
            upd = dd_sub(DoubleWord(hi[:j], lo[:j]), prod)
            hi[:j], lo[:j] = upd.hi, upd.lo
    if F.scaled:
        out = dd_mul(DoubleWord(hi, lo), dd_from(F.col_scale))
        hi, lo = np.asarray(out.hi), np.asarray(out.lo)
    return DenseVector(hi, QUAD_DD, lo)
