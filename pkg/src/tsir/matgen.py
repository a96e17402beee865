"""Test-matrix generation and Matrix Market ingestion.

randsvd-style dense matrices with a prescribed 2-norm condition number
(mode 2: one small singular value; mode 3: geometrically spaced), plus
deterministic right-hand sides and a small Matrix Market reader for the
bundled real-world test set.  Generation is deterministic under the
spec seed, using numpy's PCG64 stream.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .densela import DenseMatrix, DenseVector, matrix, vector
from .precision import DOUBLE

__all__ = [
    "RandSvdSpec",
    "MODE_ONE_SMALL",
    "MODE_GEOMETRIC",
    "haar_orthogonal",
    "randsvd",
    "rhs_randn",
    "rhs_ones",
    "read_matrix_market",
    "MatrixMarketError",
    "bundled_matrix_path",
    "BUNDLED_MATRICES",
]

MODE_ONE_SMALL = 2
MODE_GEOMETRIC = 3

# names follow the SuiteSparse originals the bundled surrogates imitate
BUNDLED_MATRICES = (
    "cage6", "tols90", "bfwa62", "cage5", "d_dyn", "d_ss",
    "Hamrle1", "ww_36_pmec_36", "steam3",
)


@dataclass(frozen=True)
class RandSvdSpec:
    n: int
    kappa2_target: float
    mode: int = MODE_ONE_SMALL
    seed: int = 1

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("randsvd needs n >= 2")
        if self.kappa2_target < 1.0:
            raise ValueError("condition number target must be >= 1")
        if self.mode not in (MODE_ONE_SMALL, MODE_GEOMETRIC):
            raise ValueError(f"unsupported singular value mode {self.mode}")


def haar_orthogonal(n: int, rng: np.random.Generator) -> DenseMatrix:
    """Haar-distributed orthogonal matrix: QR of a Gaussian matrix with
    the sign of R's diagonal absorbed into Q."""
    g = rng.standard_normal((n, n))
    q, r = np.linalg.qr(g)
    q = q * np.sign(np.diag(r))[None, :]
    return matrix(q, DOUBLE)


def singular_values(spec: RandSvdSpec) -> np.ndarray:
    """The prescribed spectrum, descending."""
    n, kappa = spec.n, spec.kappa2_target
    if spec.mode == MODE_ONE_SMALL:
        s = np.ones(n)
        s[-1] = 1.0 / kappa
    else:
        s = kappa ** (-np.arange(n) / (n - 1))
    return s


def randsvd(spec: RandSvdSpec) -> DenseMatrix:
    """A = U diag(sigma) V^T with independent Haar factors, assembled in
    binary64."""
    rng = np.random.default_rng(spec.seed)
    u = haar_orthogonal(spec.n, rng)
    v = haar_orthogonal(spec.n, rng)
    s = singular_values(spec)
    a = (u.data * s[None, :]) @ v.data.T
    return matrix(a, DOUBLE)


def randsvd_factors(spec: RandSvdSpec):
    """(U, sigma, V) exactly as used by randsvd, for fidelity checks."""
    rng = np.random.default_rng(spec.seed)
    u = haar_orthogonal(spec.n, rng)
    v = haar_orthogonal(spec.n, rng)
    return u, singular_values(spec), v


def rhs_randn(n: int, rng) -> DenseVector:
    """Standard-normal right-hand side; deterministic under a seeded
    generator (an int seed is also accepted)."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return vector(rng.standard_normal(n), DOUBLE)


def rhs_ones(n: int) -> DenseVector:
    return vector(np.ones(n), DOUBLE)


# ----------------------------------------------------------------------
# Matrix Market
# ----------------------------------------------------------------------

class MatrixMarketError(Exception):
    """Malformed Matrix Market input; the message names the line."""


def read_matrix_market(path) -> DenseMatrix:
    """Densify a real Matrix Market file (coordinate or array format).

    Supports general and symmetric storage; symmetric entries are
    mirrored and coordinate-format duplicates are summed.  Only square
    real (or integer) matrices are accepted; anything else raises
    MatrixMarketError with the offending line number.
    """
    path = Path(path)
    with open(path, "r") as fh:
        lines = fh.readlines()
    if not lines:
        raise MatrixMarketError(f"{path}: line 1: empty file")
    header = lines[0].strip().split()
    if len(header) != 5 or header[0] != "%%MatrixMarket" or header[1].lower() != "matrix":
        raise MatrixMarketError(f"{path}: line 1: not a Matrix Market matrix header")
    layout, field, symmetry = (tok.lower() for tok in header[2:5])
    if layout not in ("coordinate", "array"):
        raise MatrixMarketError(f"{path}: line 1: unsupported layout {layout!r}")
    if field not in ("real", "integer"):
        raise MatrixMarketError(f"{path}: line 1: unsupported field {field!r} (real data required)")
    if symmetry not in ("general", "symmetric"):
        raise MatrixMarketError(f"{path}: line 1: unsupported symmetry {symmetry!r}")

    idx = 1
    while idx < len(lines) and (lines[idx].startswith("%") or not lines[idx].strip()):
        idx += 1
    if idx >= len(lines):
        raise MatrixMarketError(f"{path}: line {idx + 1}: missing size line")
    size_line = idx + 1
    toks = lines[idx].split()
    try:
        if layout == "coordinate":
            nrows, ncols, nnz = (int(t) for t in toks)
        else:
            nrows, ncols = (int(t) for t in toks)
            nnz = None
    except ValueError:
        raise MatrixMarketError(f"{path}: line {size_line}: malformed size line {lines[idx].strip()!r}")
    if nrows != ncols:
        raise MatrixMarketError(f"{path}: line {size_line}: matrix is {nrows}x{ncols}, expected square")

    data = np.zeros((nrows, ncols))
    if layout == "coordinate":
        count = 0
        for off, line in enumerate(lines[idx + 1:], start=size_line + 1):
            if not line.strip() or line.startswith("%"):
                continue
            parts = line.split()
            try:
                i, j = int(parts[0]) - 1, int(parts[1]) - 1
                val = float(parts[2]) if len(parts) > 2 else None
            except (ValueError, IndexError):
                raise MatrixMarketError(f"{path}: line {off}: malformed entry {line.strip()!r}")
            if val is None:
                raise MatrixMarketError(f"{path}: line {off}: entry without a value")
            if not (0 <= i < nrows and 0 <= j < ncols):
                raise MatrixMarketError(f"{path}: line {off}: index out of range")
            data[i, j] += val  # duplicates accumulate
            if symmetry == "symmetric" and i != j:
                data[j, i] += val
            count += 1
        if nnz is not None and count != nnz:
            raise MatrixMarketError(
                f"{path}: line {size_line}: header promises {nnz} entries, file has {count}")
    else:
        vals = []
        for off, line in enumerate(lines[idx + 1:], start=size_line + 1):
            if not line.strip() or line.startswith("%"):
                continue
            try:
                vals.append(float(line.split()[0]))
            except (ValueError, IndexError):
                raise MatrixMarketError(f"{path}: line {off}: malformed value {line.strip()!r}")
        if symmetry == "general":
            if len(vals) != nrows * ncols:
                raise MatrixMarketError(f"{path}: line {size_line}: expected {nrows * ncols} values")
            data = np.array(vals).reshape((ncols, nrows)).T  # column-major file order
        else:
            expect = nrows * (nrows + 1) // 2
            if len(vals) != expect:
                raise MatrixMarketError(f"{path}: line {size_line}: expected {expect} values")
            pos = 0
            for j in range(ncols):
                for i in range(j, nrows):
                    data[i, j] = vals[pos]
                    if i != j:
                        data[j, i] = vals[pos]
                    pos += 1
    return matrix(data, DOUBLE)


def bundled_matrix_path(name: str) -> Path:
    """Path of a bundled test matrix.

    The environment variable TSIR_DATA_DIR overrides the packaged data
    directory, so alternative (e.g. original SuiteSparse) files can be
    dropped in without reinstalling.
    """
    fname = f"{name}.mtx"
    env = os.environ.get("TSIR_DATA_DIR")
    if env:
        cand = Path(env) / fname
        if cand.exists():
            return cand
    pkg = Path(__file__).parent / "data" / fname
    if pkg.exists():
        return pkg
    raise FileNotFoundError(f"no bundled matrix named {name!r}")
