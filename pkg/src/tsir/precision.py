"""Software-simulated floating-point formats.

The solvers in this package run a ladder of precisions inside ordinary
binary64 storage:

* half / bfloat16 / single are simulated by rounding after every scalar
  operation ("store wide, round often").  For half and single the
  composite ``fl64(a op b)`` followed by a cast is provably the correctly
  rounded target-format operation, so simulated arithmetic is bit-exact.
* double is native binary64.
* ``QUAD_DD`` is an extended format realized with double-word
  (double-double) arithmetic: an unevaluated sum ``hi + lo`` of two
  binary64 numbers.  Every operation carries a relative error of at most
  a few units in 2**-106 (worst case about 2**-104), which is all the
  residual-precision role of the format requires.

All kernels accept scalars or numpy arrays and never raise on Inf/NaN;
non-finite values propagate so callers can detect overflow downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

__all__ = [
    "PrecisionFormat",
    "HALF",
    "BFLOAT16",
    "SINGLE",
    "DOUBLE",
    "QUAD_DD",
    "FORMATS",
    "DoubleWord",
    "unit_roundoff",
    "round_array",
    "round_scalar",
    "round_to",
    "sim_op",
    "two_sum",
    "fast_two_sum",
    "two_prod",
    "dd_add",
    "dd_sub",
    "dd_mul",
    "dd_div",
    "dd_sqrt",
    "dd_neg",
    "dd_abs",
    "dd_from",
    "dd_to_float",
    "rounded_sum",
    "rounded_dot",
]


@dataclass(frozen=True)
class PrecisionFormat:
    """Descriptor of one simulated binary floating-point format.

    ``significand_bits`` counts the implicit leading bit, so the unit
    roundoff of a binary format is ``2**-significand_bits``.
    """

    name: str
    significand_bits: int
    min_exponent: int
    max_exponent: int
    unit_roundoff: float

    @property
    def max_finite(self) -> float:
        return (2.0 - 2.0 ** (1 - self.significand_bits)) * 2.0**self.max_exponent

    @property
    def min_normal(self) -> float:
        return 2.0**self.min_exponent

    @property
    def min_subnormal(self) -> float:
        return 2.0 ** (self.min_exponent - self.significand_bits + 1)

    def __repr__(self) -> str:  # keep reports compact
        return f"PrecisionFormat({self.name})"


HALF = PrecisionFormat("half", 11, -14, 15, 2.0**-11)
BFLOAT16 = PrecisionFormat("bfloat16", 8, -126, 127, 2.0**-8)
SINGLE = PrecisionFormat("single", 24, -126, 127, 2.0**-24)
DOUBLE = PrecisionFormat("double", 53, -1022, 1023, 2.0**-53)

# Double-word arithmetic on binary64: 106 significand bits effectively.
# Individual operations are not correctly rounded; the guaranteed per-op
# relative error bound is DD_OP_ERROR_BOUND.
QUAD_DD = PrecisionFormat("quad", 106, -1022, 1023, 2.0**-106)

DD_OP_ERROR_BOUND = 2.0**-104

FORMATS = {f.name: f for f in (HALF, BFLOAT16, SINGLE, DOUBLE, QUAD_DD)}


class DoubleWord(NamedTuple):
    """Unevaluated sum hi + lo with |lo| <= ulp(hi)/2.

    The fields may be floats or equal-shaped numpy arrays; the double-word
    kernels below work elementwise either way.
    """

    hi: Union[float, np.ndarray]
    lo: Union[float, np.ndarray]


def unit_roundoff(fmt: PrecisionFormat) -> float:
    """Unit roundoff of a format (half the relative grid spacing)."""
    return fmt.unit_roundoff


# ----------------------------------------------------------------------
# Rounding
# ----------------------------------------------------------------------

def round_array(x, fmt: PrecisionFormat) -> np.ndarray:
    """Round binary64 data onto the representable grid of ``fmt``.

    Round-to-nearest, ties-to-even, with gradual underflow and overflow
    to signed infinity.  NaN propagates.  Idempotent on grid points.
    Double and quad (double-word carrier) are identity maps here.
    """
    x = np.asarray(x, dtype=np.float64)
    if fmt is DOUBLE or fmt is QUAD_DD:
        return x.copy()
    with np.errstate(all="ignore"):
        if fmt is SINGLE:
            return x.astype(np.float32).astype(np.float64)
        if fmt is HALF:
            # numpy converts float64 -> float16 directly (no float32 hop),
            # so no double rounding.
            return x.astype(np.float16).astype(np.float64)
        return _round_generic(x, fmt)


def _round_generic(x: np.ndarray, fmt: PrecisionFormat) -> np.ndarray:
    """Grid rounding via frexp/ldexp for formats without a numpy dtype."""
    t = fmt.significand_bits
    with np.errstate(all="ignore"):
        m, e = np.frexp(x)  # x = m * 2**e with 0.5 <= |m| < 1
        normal = np.ldexp(np.rint(np.ldexp(m, t)), e - t)
        # below 2**min_exponent the grid spacing is fixed
        q = fmt.min_exponent - t + 1
        subnormal = np.ldexp(np.rint(np.ldexp(x, -q)), q)
        out = np.where(e - 1 >= fmt.min_exponent, normal, subnormal)
        out = np.where(np.abs(out) > fmt.max_finite,
                       np.copysign(np.inf, x), out)
        out = np.where(np.isnan(x), x, out)
    return out


def round_scalar(x: float, fmt: PrecisionFormat) -> float:
    """Scalar version of :func:`round_array`."""
    if fmt is DOUBLE or fmt is QUAD_DD:
        return float(x)
    with np.errstate(all="ignore"):
        if fmt is SINGLE:
            return float(np.float32(x))
        if fmt is HALF:
            return float(np.float16(x))
    return float(_round_generic(np.asarray(x, dtype=np.float64), fmt))


def round_to(x, fmt: PrecisionFormat):
    """Round a real value into ``fmt``.

    Returns a float for the single-word formats and a :class:`DoubleWord`
    for QUAD_DD (for which any binary64 input is exact, lo = 0).
    """
    if fmt is QUAD_DD:
        return DoubleWord(float(x), 0.0)
    return round_scalar(x, fmt)


# ----------------------------------------------------------------------
# Error-free transforms (valid for scalars and arrays)
# ----------------------------------------------------------------------

_SPLITTER = 134217729.0  # 2**27 + 1, Veltkamp


def two_sum(a, b):
    """Knuth two-sum: s + e == a + b exactly, s = fl(a + b)."""
    s = a + b
    v = s - a
    e = (a - (s - v)) + (b - v)
    return s, e


def fast_two_sum(a, b):
    """Dekker two-sum; requires |a| >= |b| (or a == 0)."""
    s = a + b
    e = b - (s - a)
    return s, e


def _split(a):
    t = _SPLITTER * a
    hi = t - (t - a)
    lo = a - hi
    return hi, lo


def two_prod(a, b):
    """Dekker product: p + e == a * b exactly (mid-range exponents)."""
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    e = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, e


# ----------------------------------------------------------------------
# Double-word kernels
# ----------------------------------------------------------------------

def dd_from(x) -> DoubleWord:
    """Lift binary64 data to a double word (exact)."""
    if isinstance(x, DoubleWord):
        return x
    if isinstance(x, (float, int)):
        return DoubleWord(float(x), 0.0)
    x = np.asarray(x, dtype=np.float64)
    return DoubleWord(x, np.zeros_like(x))


def dd_to_float(a: DoubleWord):
    """Round a double word back to binary64."""
    return a.hi + a.lo


def dd_neg(a: DoubleWord) -> DoubleWord:
    return DoubleWord(-a.hi, -a.lo)


def dd_abs(a: DoubleWord) -> DoubleWord:
    if isinstance(a.hi, np.ndarray):
        flip = np.signbit(a.hi)
        return DoubleWord(np.where(flip, -a.hi, a.hi),
                          np.where(flip, -a.lo, a.lo))
    return dd_neg(a) if a.hi < 0.0 else a


def dd_add(a, b) -> DoubleWord:
    """Accurate double-word addition (3u^2 relative error bound)."""
    a, b = dd_from(a), dd_from(b)
    with np.errstate(all="ignore"):
        s, e = two_sum(a.hi, b.hi)
        t, f = two_sum(a.lo, b.lo)
        e = e + t
        s, e = fast_two_sum(s, e)
        e = e + f
        hi, lo = fast_two_sum(s, e)
    return DoubleWord(hi, lo)


def dd_sub(a, b) -> DoubleWord:
    return dd_add(a, dd_neg(dd_from(b)))


def dd_mul(a, b) -> DoubleWord:
    a, b = dd_from(a), dd_from(b)
    with np.errstate(all="ignore"):
        p, e = two_prod(a.hi, b.hi)
        e = e + (a.hi * b.lo + a.lo * b.hi + a.lo * b.lo)
        hi, lo = fast_two_sum(p, e)
    return DoubleWord(hi, lo)


def dd_div(a, b) -> DoubleWord:
    """Double-word division via three-term long division."""
    a, b = dd_from(a), dd_from(b)
    with np.errstate(all="ignore"):
        q1 = a.hi / b.hi
        r = dd_sub(a, _dd_mul_f(b, q1))
        q2 = r.hi / b.hi
        r = dd_sub(r, _dd_mul_f(b, q2))
        q3 = r.hi / b.hi
        s, e = fast_two_sum(q1, q2)
        e = e + q3
        hi, lo = fast_two_sum(s, e)
    return DoubleWord(hi, lo)


def _dd_mul_f(a: DoubleWord, c):
    """Double word times binary64."""
    with np.errstate(all="ignore"):
        p, e = two_prod(a.hi, c)
        e = e + a.lo * c
        hi, lo = fast_two_sum(p, e)
    return DoubleWord(hi, lo)


def dd_sqrt(a) -> DoubleWord:
    """Double-word square root (Karp/Markstein refinement of fl64 sqrt)."""
    a = dd_from(a)
    with np.errstate(all="ignore"):
        s = np.sqrt(a.hi) if isinstance(a.hi, np.ndarray) else math.sqrt(a.hi) if a.hi >= 0.0 else math.nan
        p, e = two_prod(s, s)
        d = dd_sub(a, DoubleWord(p, e))
        corr = d.hi / (2.0 * s)
        if isinstance(s, np.ndarray):
            corr = np.where(a.hi == 0.0, 0.0, corr)
            hi, lo = fast_two_sum(s, corr)
            return DoubleWord(hi, lo)
        if a.hi == 0.0:
            return DoubleWord(s, 0.0)
        hi, lo = fast_two_sum(s, corr)
    return DoubleWord(hi, lo)


# ----------------------------------------------------------------------
# Simulated scalar/elementwise arithmetic
# ----------------------------------------------------------------------

_DD_OPS = {
    "add": dd_add,
    "sub": dd_sub,
    "mul": dd_mul,
    "div": dd_div,
}


def sim_op(op: str, a, b, fmt: PrecisionFormat):
    """One arithmetic operation carried out "in precision fmt".

    ``op`` is one of add/sub/mul/div/sqrt (``b`` is ignored for sqrt).
    For half/bfloat16/single the exact binary64 result is rounded onto the
    format grid, which yields the correctly rounded format operation; for
    double this is the native operation; for QUAD_DD the double-word
    kernels are used.  Operands are assumed representable in ``fmt``.
    Accepts scalars or arrays; Inf/NaN flow through.
    """
    if fmt is QUAD_DD:
        if op == "sqrt":
            return dd_sqrt(a)
        return _DD_OPS[op](a, b)

    a = np.asarray(a, dtype=np.float64)
    with np.errstate(all="ignore"):
        if op == "add":
            raw = a + b
        elif op == "sub":
            raw = a - b
        elif op == "mul":
            raw = a * b
        elif op == "div":
            raw = a / np.asarray(b, dtype=np.float64)
        elif op == "sqrt":
            raw = np.sqrt(a)
        else:
            raise ValueError(f"unknown operation {op!r}")
    out = round_array(raw, fmt)
    if out.ndim == 0:
        return float(out)
    return out


# ----------------------------------------------------------------------
# Rounded reductions (building blocks for dot products and norms)
# ----------------------------------------------------------------------

def rounded_sum(values: np.ndarray, fmt: PrecisionFormat) -> float:
    """Left-to-right sum with every partial rounded into ``fmt``."""
    values = np.asarray(values, dtype=np.float64)
    if fmt is DOUBLE:
        return float(np.sum(values))
    if fmt is SINGLE:
        if values.size == 0:
            return 0.0
        # float32 accumulate is a sequential correctly rounded single-
        # precision sum, identical to rounding after every addition
        with np.errstate(all="ignore"):
            return float(np.add.accumulate(values.astype(np.float32))[-1])
    s = 0.0
    for v in values.tolist():
        s = round_scalar(s + v, fmt)
    return s


def rounded_dot(a: np.ndarray, b: np.ndarray, fmt: PrecisionFormat) -> float:
    """Dot product with per-operation rounding in ``fmt``."""
    if fmt is DOUBLE:
        return float(np.dot(a, b))
    with np.errstate(all="ignore"):
        prods = round_array(np.asarray(a) * np.asarray(b), fmt)
    return rounded_sum(prods, fmt)
