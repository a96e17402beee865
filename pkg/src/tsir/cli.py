"""Benchmark harness: batch refinement runs with CSV artifacts.

Runs a set of (matrix, precision triple, variant) cases, writing one
convergence trace per case plus a summary table.  Case lists come from
named presets that regenerate the standard experiment grids, or from
explicit --randsvd / --matrix sources.  Convergence failures are data
(a dash in the summary), not process failures; the exit status is
nonzero only for configuration, parse or I/O problems.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .densela import DenseMatrix, kappa_inf
from .matgen import (
    BUNDLED_MATRICES,
    MatrixMarketError,
    RandSvdSpec,
    bundled_matrix_path,
    randsvd,
    read_matrix_market,
    rhs_ones,
    rhs_randn,
)
from .precision import DOUBLE, HALF, QUAD_DD, SINGLE, PrecisionFormat
from .refine import (
    STAGE_GMRES,
    STAGE_SGMRES,
    STAGE_SIR,
    RefineParams,
    single_stage_solve,
    tsir_solve,
)
from .trace import emit_trace_csv, format_summary

__all__ = ["ExperimentConfig", "preset", "run", "main", "PRESET_NAMES"]

TRIPLES = {
    "hsd": (HALF, SINGLE, DOUBLE),
    "sdq": (SINGLE, DOUBLE, QUAD_DD),
    "hdq": (HALF, DOUBLE, QUAD_DD),
}

VARIANTS = {
    "sir": STAGE_SIR,
    "sgmres": STAGE_SGMRES,
    "gmres": STAGE_GMRES,
    "tsir": "TSIR",
}

KAPPA_LADDER = (1e1, 1e2, 1e4, 1e5, 1e7, 1e9, 1e11, 1e14)


@dataclass
class ExperimentConfig:
    randsvd_specs: List[RandSvdSpec] = field(default_factory=list)
    matrix_files: List[str] = field(default_factory=list)
    precisions: List[str] = field(default_factory=lambda: ["sdq"])
    variants: List[str] = field(default_factory=lambda: ["sir", "sgmres", "gmres", "tsir"])
    seed: int = 1
    output_dir: str = "tsir-results"
    tau: Optional[float] = None
    i_max: int = 10
    rho_thresh: float = 0.5
    kmax_frac: float = 0.1
    conv_mode: str = "oracle"

    def validate(self) -> None:
        if not self.randsvd_specs and not self.matrix_files:
            raise ValueError("nothing to run: give --preset, --randsvd or --matrix")
        for code in self.precisions:
            if code not in TRIPLES:
                raise ValueError(f"unknown precision triple {code!r} (choose from {sorted(TRIPLES)})")
        for v in self.variants:
            if v not in VARIANTS:
                raise ValueError(f"unknown variant {v!r} (choose from {sorted(VARIANTS)})")
        if self.conv_mode not in ("estimate", "oracle"):
            raise ValueError("conv-mode must be 'estimate' or 'oracle'")


def _randsvd_ladder(mode: int, seed: int) -> List[RandSvdSpec]:
    return [RandSvdSpec(100, k, mode, seed) for k in KAPPA_LADDER]


PRESETS = {
    # the introductory three-system table
    "table1": lambda seed: ExperimentConfig(
        randsvd_specs=[RandSvdSpec(100, k, 2, seed) for k in (1e1, 1e5, 1e16)],
        precisions=["sdq"], seed=seed),
    # dense mode-2 grids for the three precision triples
    "table4": lambda seed: ExperimentConfig(randsvd_specs=_randsvd_ladder(2, seed),
                                            precisions=["sdq"], seed=seed),
    "table5": lambda seed: ExperimentConfig(randsvd_specs=_randsvd_ladder(2, seed),
                                            precisions=["hsd"], seed=seed),
    "table6": lambda seed: ExperimentConfig(randsvd_specs=_randsvd_ladder(2, seed),
                                            precisions=["hdq"], seed=seed),
    # dense mode-3 grids
    "table7": lambda seed: ExperimentConfig(randsvd_specs=_randsvd_ladder(3, seed),
                                            precisions=["sdq"], seed=seed),
    "table8": lambda seed: ExperimentConfig(randsvd_specs=_randsvd_ladder(3, seed),
                                            precisions=["hsd"], seed=seed),
    "table9": lambda seed: ExperimentConfig(randsvd_specs=_randsvd_ladder(3, seed),
                                            precisions=["hdq"], seed=seed),
    # bundled real-world set, right-hand side of ones
    "table10": lambda seed: ExperimentConfig(
        matrix_files=[str(bundled_matrix_path(n)) for n in BUNDLED_MATRICES],
        precisions=["sdq"], seed=seed),
    "table11": lambda seed: ExperimentConfig(
        matrix_files=[str(bundled_matrix_path(n)) for n in BUNDLED_MATRICES],
        precisions=["hsd"], seed=seed),
    "table12": lambda seed: ExperimentConfig(
        matrix_files=[str(bundled_matrix_path(n)) for n in BUNDLED_MATRICES],
        precisions=["hdq"], seed=seed),
}

PRESET_NAMES = tuple(PRESETS)


def preset(name: str, seed: int = 1) -> ExperimentConfig:
    """The matrix list, precision triple and variant set of a named table."""
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return factory(seed)


def _case_label(source) -> str:
    if isinstance(source, RandSvdSpec):
        return f"randsvd_m{source.mode}_k{source.kappa2_target:.0e}_s{source.seed}".replace("+", "")
    return Path(source).stem


def _load_case(source, seed):
    """Returns (label, matrix, rhs, kappa2)."""
    if isinstance(source, RandSvdSpec):
        A = randsvd(source)
        b = rhs_randn(source.n, np.random.default_rng([source.seed, 17]))
        return _case_label(source), A, b, source.kappa2_target
    A = read_matrix_market(source)
    b = rhs_ones(A.n_rows)
    kappa2 = float(np.linalg.cond(A.data, 2))
    return _case_label(source), A, b, kappa2


def run(config: ExperimentConfig) -> int:
    """Execute every case; returns the process exit status."""
    try:
        config.validate()
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    rows = []
    sources: List = list(config.randsvd_specs) + list(config.matrix_files)
    try:
        for source in sources:
            label, A, b, kappa2 = _load_case(source, config.seed)
            k_inf = kappa_inf(A)
            for code in config.precisions:
                u_f, u, u_r = TRIPLES[code]
                params = RefineParams(u_f, u, u_r, tau=config.tau,
                                      i_max=config.i_max,
                                      rho_thresh=config.rho_thresh,
                                      kmax_frac=config.kmax_frac,
                                      conv_mode=config.conv_mode)
                for vname in config.variants:
                    if VARIANTS[vname] == "TSIR":
                        report = tsir_solve(A, b, params)
                    else:
                        report = single_stage_solve(A, b, VARIANTS[vname], params)
                    case = f"{label}_{code}_{vname}"
                    emit_trace_csv(report, out / f"{case}.trace.csv")
                    rows.append([label, f"{k_inf:.16e}", f"{kappa2:.16e}",
                                 u_f.name, u.name, u_r.name, vname,
                                 format_summary(report),
                                 str(bool(report.converged)).lower()])
    except (MatrixMarketError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    try:
        tmp = out / "summary.csv.tmp"
        with open(tmp, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["matrix", "kappa_inf", "kappa_2", "uf", "u", "ur",
                             "variant", "summary", "converged"])
            writer.writerows(rows)
        os.replace(tmp, out / "summary.csv")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def _parse_randsvd(text: str) -> RandSvdSpec:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("--randsvd wants N,KAPPA,MODE")
    try:
        return RandSvdSpec(int(parts[0]), float(parts[1]), int(parts[2]))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="tsir",
        description="Mixed-precision iterative refinement benchmark harness")
    src = p.add_argument_group("case sources")
    src.add_argument("--preset", choices=PRESET_NAMES,
                     help="regenerate a standard experiment grid")
    src.add_argument("--matrix", action="append", default=[], metavar="FILE",
                     help="Matrix Market file (rhs = ones); repeatable")
    src.add_argument("--randsvd", action="append", default=[], metavar="N,KAPPA,MODE",
                     type=_parse_randsvd, help="synthetic system (rhs = randn); repeatable")
    p.add_argument("--precisions", default=None,
                   help="comma list of triples: hsd, sdq, hdq")
    p.add_argument("--variants", default=None,
                   help="comma list from sir, sgmres, gmres, tsir")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tau", type=float, default=None,
                   help="GMRES tolerance (default 1e-6 single / 1e-10 double work precision)")
    p.add_argument("--imax", type=int, default=None, help="refinement step cap per variant")
    p.add_argument("--rho-thresh", type=float, default=None, help="slow-convergence ratio threshold")
    p.add_argument("--kmax-frac", type=float, default=None,
                   help="GMRES iteration budget per step, as a fraction of n")
    p.add_argument("--conv-mode", choices=["estimate", "oracle"], default=None)
    p.add_argument("--out", default=None, metavar="DIR", help="output directory")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    seed = args.seed if args.seed is not None else 1
    if args.preset:
        try:
            config = preset(args.preset, seed)
        except (ValueError, FileNotFoundError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    else:
        config = ExperimentConfig(seed=seed)
    # explicit flags override whatever the preset chose
    if args.randsvd:
        config.randsvd_specs = [replace(s, seed=seed) for s in args.randsvd]
        if not args.preset:
            config.matrix_files = config.matrix_files or []
    if args.matrix:
        config.matrix_files = list(args.matrix)
    if args.precisions is not None:
        config.precisions = [tok.strip() for tok in args.precisions.split(",") if tok.strip()]
    if args.variants is not None:
        config.variants = [tok.strip() for tok in args.variants.split(",") if tok.strip()]
    if args.tau is not None:
        config.tau = args.tau
    if args.imax is not None:
        config.i_max = args.imax
    if args.rho_thresh is not None:
        config.rho_thresh = args.rho_thresh
    if args.kmax_frac is not None:
        config.kmax_frac = args.kmax_frac
    if args.conv_mode is not None:
        config.conv_mode = args.conv_mode
    if args.out is not None:
        config.output_dir = args.out
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
