"""Mixed-precision iterative refinement toolkit.

Solve dense square systems with LU factors computed at low precision and
refine at working precision, escalating through GMRES-based correction
solves when plain refinement stalls.  See README.md for a tour.
"""

from .precision import (
    BFLOAT16,
    DOUBLE,
    HALF,
    QUAD_DD,
    SINGLE,
    DoubleWord,
    PrecisionFormat,
    round_to,
    sim_op,
    unit_roundoff,
)
from .densela import (
    DenseMatrix,
    DenseVector,
    SingularMatrixError,
    axpy_update,
    inf_norm,
    inf_norm_mat,
    kappa_inf,
    matrix,
    matvec,
    vector,
)
from .factor import LUFactors, factor_with_retry, has_nonfinite, lu_factor, squeeze_scale, tri_solve
from .gmres import GmresOutcome, apply_precond_op, pgmres
from .refine import (
    STAGE_GMRES,
    STAGE_SGMRES,
    STAGE_SIR,
    RefineParams,
    RefineReport,
    StepRecord,
    compute_errors,
    reference_solution,
    single_stage_solve,
    tsir_solve,
)
from .matgen import (
    RandSvdSpec,
    bundled_matrix_path,
    haar_orthogonal,
    randsvd,
    read_matrix_market,
    rhs_ones,
    rhs_randn,
)
from .trace import emit_trace_csv, format_summary, parse_summary, parse_trace

__version__ = "0.1.0"
