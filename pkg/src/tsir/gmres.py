"""Left-preconditioned GMRES in a simulated working precision.

Modified Gram-Schmidt Arnoldi with Givens-rotation least squares.  The
preconditioned operator v -> U^-1 L^-1 (A v) is applied at `prod_fmt`,
which equals the working precision for the "simpler" refinement variant
and twice the working precision for the stronger one; the preconditioned
matrix is never formed.  Every vector operation, dot product and
rotation is rounded in the working precision u.

Full-memory iteration (no restarting): callers cap the iteration count
at n.  Convergence is judged by the Givens recurrence estimate of the
relative preconditioned residual, not the true residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .densela import DenseMatrix, DenseVector, matvec
from .factor import LUFactors, tri_solve
from .precision import (
    DOUBLE,
    PrecisionFormat,
    QUAD_DD,
    dd_to_float,
    round_array,
    round_scalar,
    rounded_dot,
    sim_op,
)

__all__ = ["GmresOutcome", "apply_precond_op", "pgmres"]


@dataclass
class GmresOutcome:
    d: DenseVector
    iters: int
    relres: float
    converged: bool


def apply_precond_op(F: LUFactors, A: DenseMatrix, v: DenseVector,
                     prod_fmt: PrecisionFormat,
                     out_fmt: PrecisionFormat) -> DenseVector:
    """w = U^-1 L^-1 (A v) computed at prod_fmt, rounded to out_fmt."""
    w = matvec(A, v, prod_fmt)
    w = tri_solve(F, w, prod_fmt)
    if prod_fmt is QUAD_DD:
        return DenseVector(round_array(dd_to_float(w.as_dd()), out_fmt), out_fmt)
    return DenseVector(round_array(w.data, out_fmt), out_fmt)


def _norm2(x: np.ndarray, u: PrecisionFormat) -> float:
    return round_scalar(np.sqrt(rounded_dot(x, x, u)), u) if u is not DOUBLE \
        else float(np.sqrt(np.dot(x, x)))


def pgmres(F: LUFactors, A: DenseMatrix, r: DenseVector, tau: float,
           max_iters: int, prod_fmt: PrecisionFormat,
           u: PrecisionFormat) -> GmresOutcome:
    """Solve U^-1 L^-1 A d = U^-1 L^-1 r by GMRES in precision u.

    Stops when the recurrence estimate of the relative preconditioned
    residual drops to tau or max_iters is reached.  A zero (or
    non-finite) Arnoldi norm is a breakdown: the current least-squares
    iterate is returned with converged = (relres <= tau).  The initial
    guess is always the zero vector; each call solves a fresh correction.

    One guard supplements the tolerance test.  When the estimate sits
    within two decades of tau yet has improved by less than a factor of
    two over the last two iterations, the true preconditioned residual
    of the current iterate is evaluated once.  If it disagrees with the
    estimate by more than two orders of magnitude, the Krylov basis has
    degenerated and the recurrence has detached from reality; iterating
    further only walks a fictitious estimate around, so the solve stops
    at its attainable floor.  While the estimate still tracks the truth
    (the near-stagnation phase genuinely hard systems show before sudden
    convergence) the guard stays out of the way.
    """
    n = r.n
    w0 = tri_solve(F, r, prod_fmt)
    if prod_fmt is QUAD_DD:
        w0 = round_array(dd_to_float(w0.as_dd()), u)
    else:
        w0 = round_array(w0.data, u)

    beta = _norm2(w0, u)
    if beta == 0.0:
        return GmresOutcome(DenseVector(np.zeros(n), u), 0, 0.0, True)
    if not np.isfinite(beta):
        return GmresOutcome(DenseVector(np.zeros(n), u), 1, float(beta), False)

    m = max_iters
    V = np.zeros((n, m + 1))
    H = np.zeros((m + 1, m))
    cs = np.zeros(m)
    sn = np.zeros(m)
    g = np.zeros(m + 1)
    g[0] = beta
    with np.errstate(all="ignore"):
        V[:, 0] = round_array(w0 / beta, u)
    relres = 1.0
    k = 0   # operator applications performed
    kk = 0  # least-squares columns safe to use
    history = []
    last_check = 0
    for k in range(1, m + 1):
        j = k - 1
        w = apply_precond_op(F, A, DenseVector(V[:, j].copy(), u), prod_fmt, u).data
        with np.errstate(all="ignore"):
            for i in range(k):  # modified Gram-Schmidt
                hij = rounded_dot(V[:, i], w, u)
                H[i, j] = hij
                w = round_array(w - round_array(hij * V[:, i], u), u)
            hkk = _norm2(w, u)
            H[k, j] = hkk
            # previously accumulated rotations
            for i in range(j):
                t1 = round_scalar(round_scalar(cs[i] * H[i, j], u)
                                  + round_scalar(sn[i] * H[i + 1, j], u), u)
                t2 = round_scalar(round_scalar(cs[i] * H[i + 1, j], u)
                                  - round_scalar(sn[i] * H[i, j], u), u)
                H[i, j], H[i + 1, j] = t1, t2
            denom = _norm2(np.array([H[j, j], H[k, j]]), u)
            if denom == 0.0 or not np.isfinite(denom):
                break  # rotation undefined; keep previous columns
            cs[j] = round_scalar(H[j, j] / denom, u)
            sn[j] = round_scalar(H[k, j] / denom, u)
            H[j, j] = round_scalar(round_scalar(cs[j] * H[j, j], u)
                                   + round_scalar(sn[j] * H[k, j], u), u)
            H[k, j] = 0.0
            g[k] = round_scalar(-sn[j] * g[j], u)
            g[j] = round_scalar(cs[j] * g[j], u)
        est = abs(g[k]) / beta
        if not np.isfinite(est):
            break  # poisoned recurrence; previous columns already garbage
        kk = k
        relres = est
        history.append(est)
        if relres <= tau:
            break
        if (len(history) >= 3 and est <= 100.0 * tau
                and est > 0.5 * history[-3] and k - last_check >= 5):
            last_check = k
            trial = _ls_solution(V, H, g, kk, u, n)
            resid = w0 - apply_precond_op(F, A, DenseVector(trial, u),
                                          prod_fmt, u).data
            true_rel = float(np.sqrt(np.dot(resid, resid))) / beta
            if not np.isfinite(true_rel) or true_rel > 100.0 * max(est, tau):
                break  # recurrence detached from the true residual
        if hkk == 0.0 or not np.isfinite(hkk):
            break  # lucky (or fatal) Arnoldi breakdown
        with np.errstate(all="ignore"):
            V[:, k] = round_array(w / hkk, u)

    d = _ls_solution(V, H, g, kk, u, n)
    converged = bool(np.isfinite(relres) and relres <= tau)
    return GmresOutcome(DenseVector(d, u), k, float(relres), converged)


def _ls_solution(V, H, g, k, u, n):
    """Back-substitute the rotated Hessenberg system and expand in the
    Krylov basis, all in precision u."""
    if k == 0:
        return np.zeros(n)
    y = np.zeros(k)
    with np.errstate(all="ignore"):
        for i in range(k - 1, -1, -1):
            s = g[i]
            for j in range(i + 1, k):
                s = round_scalar(s - round_scalar(H[i, j] * y[j], u), u)
            y[i] = round_scalar(np.divide(s, H[i, i]), u)
        d = np.zeros(n)
        for i in range(k):
            d = round_array(d + round_array(y[i] * V[:, i], u), u)
    return d
