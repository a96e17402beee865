"""Mixed-precision iterative refinement drivers.

Four ways to solve Ax = b with an LU factorization computed at a (often
lower) factorization precision:

* ``single_stage_solve`` runs one fixed variant — plain refinement whose
  correction reuses the triangular factors ("SIR"), or refinement whose
  correction comes from LU-preconditioned GMRES at working precision
  ("SGMRES-IR") or with the preconditioned operator applied at twice the
  working precision ("GMRES-IR").
* ``tsir_solve`` is the three-stage controller: it starts with the cheap
  variant and escalates SIR -> SGMRES-IR -> GMRES-IR when the monitored
  quantities indicate stagnation or divergence.

Residuals are computed at the residual precision and normalized before
the correction solve; the normalization is undone in the solution
update, which protects the narrow formats from overflow and underflow.

Convergence detection has two modes.  "oracle" (used for benchmark
reproduction) measures true forward/backward errors against an extended
precision reference solution after every step and stops when all three
reach the working-precision level.  "estimate" uses only the normwise
error estimate phi = z / (1 - rho_max) assembled from quantities the
iteration produces anyway; it declares convergence when
0 <= phi <= sqrt(n) u.  Because the monitored corrections are the
normalized ones, the estimate is deliberately conservative: it never
declares convergence spuriously, but on generic systems it may fail to
declare it at all and report non-convergence after the step caps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .densela import (
    DenseMatrix,
    DenseVector,
    axpy_update,
    dd_lu,
    dd_lu_solve,
    inf_norm,
    inf_norm_mat,
    matvec,
    matrix,
    vector,
)
from .factor import LUFactors, factor_with_retry, has_nonfinite, tri_solve
from .gmres import pgmres
from .precision import (
    DOUBLE,
    QUAD_DD,
    PrecisionFormat,
    dd_add,
    dd_div,
    dd_from,
    dd_sub,
    dd_to_float,
    round_array,
)
from .trace import structural_summary

__all__ = [
    "STAGE_SIR",
    "STAGE_SGMRES",
    "STAGE_GMRES",
    "RefineParams",
    "RefineState",
    "StepRecord",
    "RefineReport",
    "reference_solution",
    "compute_errors",
    "initial_solve",
    "scaled_residual",
    "refinement_step",
    "should_stop_stage",
    "detect_convergence",
    "single_stage_solve",
    "tsir_solve",
]

STAGE_SIR = "SIR"
STAGE_SGMRES = "SGMRES-IR"
STAGE_GMRES = "GMRES-IR"

_NEXT_STAGE = {STAGE_SIR: STAGE_SGMRES, STAGE_SGMRES: STAGE_GMRES}


@dataclass
class RefineParams:
    """Precision triple and control knobs for one refinement run."""

    u_f: PrecisionFormat
    u: PrecisionFormat
    u_r: PrecisionFormat
    tau: Optional[float] = None
    i_max: int = 10
    rho_thresh: float = 0.5
    kmax_frac: float = 0.1
    conv_mode: str = "estimate"
    squeeze: bool = True
    squeeze_theta: float = 0.1

    def __post_init__(self):
        if self.tau is None:
            self.tau = 1e-6 if self.u is not DOUBLE else 1e-10
        if not (0.0 < self.rho_thresh < 1.0):
            raise ValueError("rho_thresh must lie in (0, 1)")
        if self.i_max < 1:
            raise ValueError("i_max must be at least 1")
        if not (0.0 < self.kmax_frac <= 1.0):
            raise ValueError("kmax_frac must lie in (0, 1]")
        if self.conv_mode not in ("estimate", "oracle"):
            raise ValueError("conv_mode must be 'estimate' or 'oracle'")
        # the precision regime the convergence theory assumes
        if self.u_r.unit_roundoff > self.u.unit_roundoff**2:
            raise ValueError("residual precision too coarse: need u_r <= u^2")
        if self.u.unit_roundoff > self.u_f.unit_roundoff**2:
            raise ValueError("working precision too coarse: need u <= u_f^2")

    @property
    def gmres_prod_fmt_strong(self) -> PrecisionFormat:
        """Realization of u^2 for the strong GMRES variant."""
        return QUAD_DD if self.u is DOUBLE else DOUBLE


@dataclass
class RefineState:
    x: DenseVector
    stage: str = STAGE_SIR
    d_prev_norm: float = math.inf
    rho_max: float = 0.0
    phi_0: Optional[float] = None
    phi_i: float = math.nan
    iter_stage: int = 0
    i_global: int = 0
    gamma: float = 10.0


@dataclass
class StepRecord:
    i_global: int
    stage: str
    gmres_iters: int
    z: float
    v: float
    phi: float
    ferr: float = math.nan
    nbe: float = math.nan
    cbe: float = math.nan
    switch_event: Optional[str] = None


@dataclass
class RefineReport:
    steps: List[StepRecord]
    converged: bool
    final_x: DenseVector
    summary_string: str


# ----------------------------------------------------------------------
# oracles
# ----------------------------------------------------------------------

def reference_solution(A: DenseMatrix, b: DenseVector) -> DenseVector:
    """Extended-precision solve: double-word GEPP plus one double-word
    refinement step.  Raises SingularMatrixError on a zero pivot."""
    lu, perm = dd_lu(A)
    x = dd_lu_solve(lu, perm, b.as_dd())
    xvec = DenseVector(np.asarray(x.hi), QUAD_DD, np.asarray(x.lo))
    r = dd_sub(b.as_dd(), matvec(A, xvec, QUAD_DD).as_dd())
    d = dd_lu_solve(lu, perm, r)
    x = dd_add(x, d)
    return DenseVector(np.asarray(x.hi), QUAD_DD, np.asarray(x.lo))


def compute_errors(A: DenseMatrix, x: DenseVector, b: DenseVector,
                   x_ref: DenseVector) -> Tuple[float, float, float]:
    """(forward error, normwise backward error, componentwise backward
    error), all evaluated in double-word arithmetic.

    cbe uses the convention 0/0 := 0 for zero residual rows with zero
    denominator.  Raises ValueError when the reference is the zero
    vector for a nonzero right-hand side (the forward error would be
    undefined).
    """
    ref_norm = inf_norm(x_ref)
    if ref_norm == 0.0:
        if inf_norm(b) != 0.0:
            raise ValueError("reference solution is zero for a nonzero rhs")
        ferr = 0.0 if inf_norm(x) == 0.0 else math.inf
    else:
        diff = dd_sub(x.as_dd(), x_ref.as_dd())
        ferr = float(np.max(np.abs(diff.hi + diff.lo))) / ref_norm

    with np.errstate(all="ignore"):
        r = dd_sub(b.as_dd(), matvec(A, x, QUAD_DD).as_dd())
        rabs = np.abs(r.hi + r.lo)
        den_n = inf_norm_mat(A) * inf_norm(x) + inf_norm(b)
        nbe = float(np.max(rabs) / den_n) if den_n != 0.0 else (0.0 if np.max(rabs) == 0.0 else math.inf)

        absA = DenseMatrix(np.abs(A.data), A.fmt)
        absx = DenseVector(np.abs(x.data), x.fmt)
        den = matvec(absA, absx, QUAD_DD)
        den_c = np.abs(den.data + den.lo) + np.abs(b.data)
        ratios = np.where(den_c == 0.0, np.where(rabs == 0.0, 0.0, math.inf),
                          rabs / np.where(den_c == 0.0, 1.0, den_c))
        cbe = float(np.max(ratios))
    return ferr, nbe, cbe


# ----------------------------------------------------------------------
# building blocks
# ----------------------------------------------------------------------

def initial_solve(A: DenseMatrix, b: DenseVector, F: LUFactors,
                  params: RefineParams) -> DenseVector:
    """x0 from substitution at the factorization precision, stored at the
    working precision; falls back to the zero vector whenever the factors
    failed or the solve produced Inf/NaN."""
    n = A.n_rows
    if F.failed:
        return DenseVector(np.zeros(n), params.u)
    x0 = tri_solve(F, b, params.u_f)
    data = round_array(x0.data, params.u)
    if has_nonfinite(data):
        return DenseVector(np.zeros(n), params.u)
    return DenseVector(data, params.u)


def scaled_residual(A: DenseMatrix, x: DenseVector, b: DenseVector,
                    params: RefineParams) -> Tuple[DenseVector, float]:
    """Residual b - A x at the residual precision, normalized by its
    sup-norm (taken before any narrowing) and stored at the working
    precision.  A zero residual returns (zero vector, 0.0)."""
    with np.errstate(all="ignore"):
        if params.u_r is QUAD_DD:
            r = dd_sub(b.as_dd(), matvec(A, x, QUAD_DD).as_dd())
            mags = np.abs(r.hi + r.lo)
            rnorm = float(np.max(mags))
            if rnorm == 0.0:
                return DenseVector(np.zeros(x.n), params.u), 0.0
            scaled = dd_div(r, dd_from(rnorm))
            r_hat = round_array(dd_to_float(scaled), params.u)
        else:
            ax = matvec(A, x, params.u_r)
            r = round_array(b.data - ax.data, params.u_r)
            rnorm = float(np.max(np.abs(r)))
            if rnorm == 0.0:
                return DenseVector(np.zeros(x.n), params.u), 0.0
            r_hat = round_array(round_array(r / rnorm, params.u_r), params.u)
    return DenseVector(r_hat, params.u), rnorm


def refinement_step(state: RefineState, A: DenseMatrix, b: DenseVector,
                    F: LUFactors, variant: str, params: RefineParams,
                    x_ref: Optional[DenseVector] = None):
    """One refinement step of the given variant; mutates and returns state.

    Computes the scaled residual, solves for the correction (triangular
    solves for SIR, preconditioned GMRES otherwise), updates the iterate
    and the monitored quantities z, v, rho_max and phi.  A SIR correction
    containing Inf/NaN yields a NanEscape record and leaves the state
    untouched apart from the step counters.
    """
    state.i_global += 1
    state.iter_stage += 1
    n = A.n_rows

    r_hat, rnorm = scaled_residual(A, state.x, b, params)
    if rnorm == 0.0:  # the iterate solves the system exactly at u_r
        record = StepRecord(state.i_global, variant, 0, 0.0, 0.0, 0.0)
        state.phi_i = 0.0
        if state.phi_0 is None:
            state.phi_0 = 0.0
        _attach_errors(record, A, state.x, b, x_ref, params)
        return record, state

    if variant == STAGE_SIR:
        d = tri_solve(F, r_hat, params.u_f)
        d = DenseVector(round_array(d.data, params.u), params.u)
        gm_iters = 0
        if has_nonfinite(d):
            record = StepRecord(state.i_global, variant, 0,
                                math.nan, math.nan, math.nan,
                                switch_event="NanEscape")
            _attach_errors(record, A, state.x, b, x_ref, params)
            return record, state
    else:
        prod_fmt = params.u if variant == STAGE_SGMRES else params.gmres_prod_fmt_strong
        out = pgmres(F, A, r_hat, params.tau, n, prod_fmt, params.u)
        d = out.d
        gm_iters = out.iters

    dnorm = inf_norm(d)
    with np.errstate(all="ignore"):
        x_norm = inf_norm(state.x)
        z = dnorm / x_norm if x_norm != 0.0 else (0.0 if dnorm == 0.0 else math.inf)
        v = 0.0 if math.isinf(state.d_prev_norm) else dnorm / state.d_prev_norm
        if v > state.rho_max:  # NaN-safe running max
            state.rho_max = v
        denom = 1.0 - state.rho_max
        phi = z / denom if denom != 0.0 else math.inf

    state.x = axpy_update(state.x, rnorm, d, params.u)
    state.d_prev_norm = dnorm
    state.phi_i = phi
    if state.phi_0 is None and not math.isnan(phi):
        state.phi_0 = phi

    record = StepRecord(state.i_global, variant, gm_iters, z, v, phi)
    _attach_errors(record, A, state.x, b, x_ref, params)
    return record, state


def _attach_errors(record: StepRecord, A, x, b, x_ref, params) -> None:
    if params.conv_mode == "oracle" and x_ref is not None:
        record.ferr, record.nbe, record.cbe = compute_errors(A, x, b, x_ref)


def should_stop_stage(state: RefineState, record: StepRecord,
                      params: RefineParams, n: int) -> Optional[str]:
    """First applicable stop criterion for the current stage, or None.

    The correction-based criteria (tiny update, stalled ratio, small
    phi) are judged only from the second step of a stage onward: they
    compare against the previous step, so on a stage's first step they
    would be reading the previous stage.  The GMRES iteration budget and
    the per-stage step cap fire at any time.  In the terminal strong
    stage only the step cap and the phi trigger apply.
    """
    u_unit = params.u.unit_roundoff
    seasoned = state.iter_stage >= 2
    if record.stage != STAGE_GMRES:
        if seasoned and record.z <= u_unit:
            return "tiny-correction"
        if seasoned and record.v >= params.rho_thresh:
            return "slow-convergence"
        if state.iter_stage > params.i_max:
            return "step-cap"
        if record.stage == STAGE_SGMRES and record.gmres_iters > params.kmax_frac * n:
            return "gmres-budget"
        if (params.conv_mode == "estimate" and seasoned
                and record.phi <= math.sqrt(n) * u_unit):
            return "phi-trigger"
        return None
    if state.iter_stage > params.i_max:
        return "step-cap"
    if params.conv_mode == "estimate" and record.phi <= math.sqrt(n) * u_unit:
        return "phi-trigger"
    return None


def detect_convergence(state: RefineState, record: StepRecord,
                       params: RefineParams, n: int) -> bool:
    """Estimate mode: 0 <= phi <= sqrt(n) u (negative phi flags
    divergence).  Oracle mode: all three measured errors at the working
    precision level, gamma * u with gamma = max(10, sqrt(n))."""
    if params.conv_mode == "oracle":
        gamma = max(10.0, math.sqrt(n))
        level = gamma * params.u.unit_roundoff
        return (record.ferr <= level and record.nbe <= level
                and record.cbe <= level)
    return 0.0 <= record.phi <= math.sqrt(n) * params.u.unit_roundoff


# ----------------------------------------------------------------------
# drivers
# ----------------------------------------------------------------------

def _setup(A, b, params):
    A = A if isinstance(A, DenseMatrix) else matrix(A, DOUBLE)
    b = b if isinstance(b, DenseVector) else vector(b, DOUBLE)
    if A.n_rows != A.n_cols or A.n_rows != b.n:
        raise ValueError("need a square system with matching rhs")
    F = factor_with_retry(A, params.u_f, theta=params.squeeze_theta,
                          squeeze=params.squeeze)
    x0 = initial_solve(A, b, F, params)
    x_ref = reference_solution(A, b) if params.conv_mode == "oracle" else None
    return A, b, F, x0, x_ref


def single_stage_solve(A, b, variant: str, params: RefineParams) -> RefineReport:
    """Run exactly one refinement variant for up to i_max steps."""
    if variant not in (STAGE_SIR, STAGE_SGMRES, STAGE_GMRES):
        raise ValueError(f"unknown variant {variant!r}")
    A, b, F, x0, x_ref = _setup(A, b, params)
    n = A.n_rows
    state = RefineState(x=x0.copy(), stage=variant, gamma=max(10.0, math.sqrt(n)))
    records: List[StepRecord] = []
    converged = False
    for _ in range(params.i_max):
        record, state = refinement_step(state, A, b, F, variant, params, x_ref)
        records.append(record)
        if record.switch_event == "NanEscape":
            continue
        if detect_convergence(state, record, params, n):
            converged = True
            break
    return RefineReport(records, converged, state.x,
                        structural_summary(records))


def tsir_solve(A, b, params: RefineParams) -> RefineReport:
    """Three-stage adaptive refinement.

    Starts with SIR and escalates on the stop criteria; on a switch the
    iterate is reset to x0 if the error estimate got worse than it was
    after the first step.  A SIR correction with Inf/NaN escalates
    immediately without touching the iterate, and an over-budget GMRES
    step escalates out of the intermediate stage immediately (its update
    is kept).  Never raises on non-convergence: the report carries
    converged=False after the caps (at most 3 * i_max steps in total).
    """
    A, b, F, x0, x_ref = _setup(A, b, params)
    n = A.n_rows
    state = RefineState(x=x0.copy(), stage=STAGE_SIR, gamma=max(10.0, math.sqrt(n)))
    records: List[StepRecord] = []
    converged = False
    while True:
        record, state = refinement_step(state, A, b, F, state.stage, params, x_ref)
        records.append(record)

        if record.switch_event == "NanEscape":
            state.stage = STAGE_SGMRES
            state.iter_stage = 0
            if state.i_global >= 3 * params.i_max:
                break
            continue

        if detect_convergence(state, record, params, n):
            converged = True
            break

        reason = should_stop_stage(state, record, params, n)
        if reason is not None:
            if state.stage == STAGE_GMRES:
                break  # terminal stage: stop unconverged
            reset = (state.phi_0 is not None and record.phi > state.phi_0)
            if reset:
                state.x = x0.copy()
            if reason == "gmres-budget":
                record.switch_event = "KmaxEscape"
            elif reset:
                record.switch_event = "Reset"
            else:
                record.switch_event = ("ToSGMRES" if state.stage == STAGE_SIR
                                       else "ToGMRESIR")
            state.stage = _NEXT_STAGE[state.stage]
            state.iter_stage = 0

        if state.i_global >= 3 * params.i_max:
            break
    return RefineReport(records, converged, state.x,
                        structural_summary(records))
