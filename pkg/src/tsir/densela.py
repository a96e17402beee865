"""Precision-tagged dense containers and kernels.

Vectors and matrices hold binary64 data whose entries are representable
in the tagged format; QUAD_DD containers carry a second word per entry.
The kernels (matvec, norms, axpy) round after every scalar operation in
the requested format, vectorized column-by-column so the sequential
rounding order is the usual left-to-right dot product.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .precision import (
    DOUBLE,
    QUAD_DD,
    DoubleWord,
    PrecisionFormat,
    dd_add,
    dd_div,
    dd_from,
    dd_mul,
    dd_sub,
    dd_to_float,
    round_array,
    two_prod,
    fast_two_sum,
)

__all__ = [
    "DenseMatrix",
    "DenseVector",
    "SingularMatrixError",
    "vector",
    "matrix",
    "matvec",
    "inf_norm",
    "inf_norm_mat",
    "axpy_update",
    "kappa_inf",
]


class SingularMatrixError(Exception):
    """Raised when an exact (double-word) elimination meets a zero pivot."""


@dataclass
class DenseVector:
    data: np.ndarray
    fmt: PrecisionFormat
    lo: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def copy(self) -> "DenseVector":
        return DenseVector(self.data.copy(), self.fmt,
                           None if self.lo is None else self.lo.copy())

    def as_dd(self) -> DoubleWord:
        if self.lo is None:
            return dd_from(self.data)
        return DoubleWord(self.data, self.lo)


@dataclass
class DenseMatrix:
    data: np.ndarray  # (n_rows, n_cols), column-major storage
    fmt: PrecisionFormat
    lo: Optional[np.ndarray] = None

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def n_cols(self) -> int:
        return self.data.shape[1]

    def copy(self) -> "DenseMatrix":
        return DenseMatrix(self.data.copy(order="F"), self.fmt,
                           None if self.lo is None else self.lo.copy(order="F"))

    def as_dd(self) -> DoubleWord:
        if self.lo is None:
            return dd_from(self.data)
        return DoubleWord(self.data, self.lo)


def vector(values, fmt: PrecisionFormat = DOUBLE) -> DenseVector:
    """Build a vector, rounding the entries into fmt."""
    data = np.asarray(values, dtype=np.float64).reshape(-1)
    if fmt is QUAD_DD:
        return DenseVector(data.copy(), fmt, np.zeros_like(data))
    return DenseVector(round_array(data, fmt), fmt)


def matrix(values, fmt: PrecisionFormat = DOUBLE) -> DenseMatrix:
    """Build a matrix (column-major), rounding the entries into fmt."""
    data = np.array(values, dtype=np.float64, order="F")
    if data.ndim != 2:
        raise ValueError("matrix() expects 2-D data")
    if fmt is QUAD_DD:
        return DenseMatrix(data, fmt, np.zeros_like(data))
    return DenseMatrix(round_array(data, fmt), fmt)


# ----------------------------------------------------------------------
# kernels
# ----------------------------------------------------------------------

def matvec(A: DenseMatrix, x: DenseVector, fmt: PrecisionFormat) -> DenseVector:
    """y = A @ x with every multiply and add rounded in fmt.

    Accumulation runs left to right over columns, which is the ordinary
    sequential dot-product order applied to all rows at once.
    """
    if A.n_cols != x.n:
        raise ValueError(f"dimension mismatch: {A.n_cols} columns vs {x.n} entries")
    if fmt is QUAD_DD:
        acc = _dd_matvec(A.as_dd(), x.as_dd())
        return DenseVector(acc.hi, QUAD_DD, acc.lo)
    Ad = round_array(A.data, fmt)
    xd = round_array(x.data, fmt)
    y = np.zeros(A.n_rows)
    with np.errstate(all="ignore"):
        for j in range(A.n_cols):
            y = round_array(y + round_array(Ad[:, j] * xd[j], fmt), fmt)
    return DenseVector(y, fmt)


def _dd_matvec(A: DoubleWord, x: DoubleWord) -> DoubleWord:
    n = A.hi.shape[0]
    acc = DoubleWord(np.zeros(n), np.zeros(n))
    for j in range(A.hi.shape[1]):
        col = DoubleWord(A.hi[:, j], A.lo[:, j])
        xj = DoubleWord(x.hi[j], x.lo[j])
        acc = dd_add(acc, dd_mul(col, xj))
    return acc


def inf_norm(v: DenseVector) -> float:
    """Max-magnitude entry; NaN input yields NaN."""
    if v.lo is not None:
        vals = np.abs(v.data + v.lo)
    else:
        vals = np.abs(v.data)
    return float(np.max(vals)) if vals.size else 0.0


def inf_norm_mat(A: DenseMatrix) -> float:
    """Max absolute row sum; NaN input yields NaN."""
    data = A.data if A.lo is None else A.data + A.lo
    return float(np.max(np.sum(np.abs(data), axis=1)))


def axpy_update(x: DenseVector, alpha: float, d: DenseVector,
                fmt: PrecisionFormat) -> DenseVector:
    """x + alpha * d with both operations rounded in fmt."""
    if x.n != d.n:
        raise ValueError("axpy_update: length mismatch")
    if fmt is QUAD_DD:
        out = dd_add(x.as_dd(), dd_mul(d.as_dd(), dd_from(float(alpha))))
        return DenseVector(out.hi, QUAD_DD, out.lo)
    with np.errstate(all="ignore"):
        scaled = round_array(round_array(d.data, fmt) * alpha, fmt)
        out = round_array(round_array(x.data, fmt) + scaled, fmt)
    return DenseVector(out, fmt)


# ----------------------------------------------------------------------
# double-word elimination (shared by kappa_inf and the reference solver)
# ----------------------------------------------------------------------

def dd_lu(A: DenseMatrix):
    """GEPP in double-word arithmetic on the (exactly lifted) matrix.

    Returns (lu: DoubleWord arrays, perm) with unit L stored below the
    diagonal.  Raises SingularMatrixError on an exactly zero pivot.
    """
    n = A.n_rows
    hi = np.array(A.data, dtype=np.float64)
    lo = np.zeros_like(hi) if A.lo is None else A.lo.copy()
    perm = np.arange(n)
    for k in range(n - 1):
        p = k + int(np.argmax(np.abs(hi[k:, k] + lo[k:, k])))
        if hi[p, k] + lo[p, k] == 0.0:
            raise SingularMatrixError(f"zero pivot in column {k}")
        if p != k:
            hi[[k, p], :] = hi[[p, k], :]
            lo[[k, p], :] = lo[[p, k], :]
            perm[[k, p]] = perm[[p, k]]
        piv = DoubleWord(hi[k, k], lo[k, k])
        mult = dd_div(DoubleWord(hi[k + 1:, k], lo[k + 1:, k]), piv)
        hi[k + 1:, k], lo[k + 1:, k] = mult.hi, mult.lo
        sub = dd_mul(DoubleWord(mult.hi[:, None], mult.lo[:, None]),
                     DoubleWord(hi[k, k + 1:][None, :], lo[k, k + 1:][None, :]))
        upd = dd_sub(DoubleWord(hi[k + 1:, k + 1:], lo[k + 1:, k + 1:]), sub)
        hi[k + 1:, k + 1:], lo[k + 1:, k + 1:] = upd.hi, upd.lo
    if hi[n - 1, n - 1] + lo[n - 1, n - 1] == 0.0:
        raise SingularMatrixError(f"zero pivot in column {n - 1}")
    return DoubleWord(hi, lo), perm


def dd_lu_solve(lu: DoubleWord, perm: np.ndarray, B: DoubleWord) -> DoubleWord:
    """Solve LU X = B[perm] in double-word arithmetic, B of shape (n,) or (n, k)."""
    flat = np.asarray(B.hi).ndim == 1
    bhi = np.asarray(B.hi, dtype=np.float64)
    blo = np.asarray(B.lo, dtype=np.float64)
    if flat:
        bhi, blo = bhi[:, None], blo[:, None]
    hi = np.array(bhi[perm], dtype=np.float64)
    lo = np.array(blo[perm], dtype=np.float64)
    n = hi.shape[0]
    for j in range(n - 1):  # unit lower
        xj = DoubleWord(hi[j], lo[j])
        col = DoubleWord(lu.hi[j + 1:, j], lu.lo[j + 1:, j])
        prod = dd_mul(DoubleWord(col.hi[:, None], col.lo[:, None]),
                      DoubleWord(xj.hi[None, :], xj.lo[None, :]))
        upd = dd_sub(DoubleWord(hi[j + 1:], lo[j + 1:]), prod)
        hi[j + 1:], lo[j + 1:] = upd.hi, upd.lo
    for j in range(n - 1, -1, -1):  # upper
        xj = dd_div(DoubleWord(hi[j], lo[j]),
                    DoubleWord(lu.hi[j, j], lu.lo[j, j]))
        hi[j], lo[j] = xj.hi, xj.lo
        if j:
            col = DoubleWord(lu.hi[:j, j], lu.lo[:j, j])
            prod = dd_mul(DoubleWord(col.hi[:, None], col.lo[:, None]),
                          DoubleWord(xj.hi[None, :], xj.lo[None, :]))
            upd = dd_sub(DoubleWord(hi[:j], lo[:j]), prod)
            hi[:j], lo[:j] = upd.hi, upd.lo
    if flat:
        return DoubleWord(hi[:, 0], lo[:, 0])
    return DoubleWord(hi, lo)


def kappa_inf(A: DenseMatrix) -> float:
    """Infinity-norm condition number via an explicit double-word inverse.

    Intended for the desk scales used here (n up to a few hundred), where
    exactness matters more than speed.  Raises SingularMatrixError when
    elimination meets a zero pivot.
    """
    n = A.n_rows
    if n != A.n_cols:
        raise ValueError("kappa_inf expects a square matrix")
    lu, perm = dd_lu(A)
    eye = np.eye(n)
    inv = dd_lu_solve(lu, perm, dd_from(eye))
    inv_mat = DenseMatrix(np.asfortranarray(inv.hi), QUAD_DD,
                          np.asfortranarray(inv.lo))
    return inf_norm_mat(A) * inf_norm_mat(inv_mat)
