"""Convergence traces and summary strings.

Per-step trajectories serialize to CSV with 17 significant digits so
binary64 values round-trip losslessly.  Summaries follow the compact
table notation: the number of plain refinement steps first, then one
parenthesized group of per-step GMRES iteration counts for each
GMRES-based stage that ran, e.g. ``2, (3,3), (3,4)``.  A run that never
entered the plain stage omits the leading count; an unconverged run
renders as ``-`` in tables while the structural string stays available
on the report.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

__all__ = [
    "TraceRow",
    "structural_summary",
    "format_summary",
    "parse_summary",
    "emit_trace_csv",
    "parse_trace",
]

TRACE_HEADER = ["step", "stage", "gmres_iters", "ferr", "nbe", "cbe",
                "phi", "z", "v", "switch_event"]

_STAGES = ("SIR", "SGMRES-IR", "GMRES-IR")


@dataclass
class TraceRow:
    step: int
    stage: str
    gmres_iters: int
    ferr: float
    nbe: float
    cbe: float
    phi: float
    z: float
    v: float
    switch_event: str = ""


def _fmt_real(x: float) -> str:
    """17 significant digits, enough for a lossless binary64 round trip."""
    return f"{x:.16e}"


def structural_summary(steps: Sequence) -> str:
    """Build the summary grammar from step records.

    ``steps`` is any sequence with .stage, .gmres_iters and .switch_event
    attributes.  The plain-refinement count omits escape steps that never
    updated the iterate, so a run whose first correction overflowed
    reports "0, (...)".
    """
    if not steps:
        return ""
    parts: List[str] = []
    if steps[0].stage == "SIR":
        sir_count = sum(1 for s in steps
                        if s.stage == "SIR" and s.switch_event != "NanEscape")
        parts.append(str(sir_count))
    for stage in ("SGMRES-IR", "GMRES-IR"):
        iters = [s.gmres_iters for s in steps if s.stage == stage]
        if iters:
            parts.append("(" + ",".join(str(k) for k in iters) + ")")
    return ", ".join(parts)


def format_summary(report) -> str:
    """Table rendering of a report: the structural summary, or a dash for
    a run that failed to converge."""
    if not report.converged:
        return "-"
    return report.summary_string


def parse_summary(text: str):
    """Inverse of the summary grammar.

    Returns (sir_count or None, [list of per-stage iteration tuples]), or
    None for a dash.  ``format``ing the parse emits the input unchanged,
    which the tests use as a round-trip check.
    """
    text = text.strip()
    if text == "-":
        return None
    sir_count: Optional[int] = None
    groups: List[Tuple[int, ...]] = []
    for part in _split_top_level(text):
        part = part.strip()
        if part.startswith("("):
            if not part.endswith(")"):
                raise ValueError(f"unbalanced parenthesis in {text!r}")
            inner = part[1:-1].strip()
            groups.append(tuple(int(tok) for tok in inner.split(",")) if inner else ())
        else:
            if sir_count is not None or groups:
                raise ValueError(f"stray step count in {text!r}")
            sir_count = int(part)
    return sir_count, groups


def _split_top_level(text: str) -> List[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if cur:
        parts.append("".join(cur))
    return parts


def render_summary(parsed) -> str:
    """Format a parse_summary result back into the grammar."""
    if parsed is None:
        return "-"
    sir_count, groups = parsed
    parts = [] if sir_count is None else [str(sir_count)]
    parts += ["(" + ",".join(str(k) for k in g) + ")" for g in groups]
    return ", ".join(parts)


def emit_trace_csv(report, path) -> None:
    """Write one row per refinement step; deterministic byte output.

    Steps are numbered from 1 in file order.  I/O errors surface with
    the destination path in the message.
    """
    try:
        tmp = f"{path}.tmp"
        with open(tmp, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRACE_HEADER)
            for idx, s in enumerate(report.steps, start=1):
                writer.writerow([
                    idx, s.stage, s.gmres_iters,
                    _fmt_real(s.ferr), _fmt_real(s.nbe), _fmt_real(s.cbe),
                    _fmt_real(s.phi), _fmt_real(s.z), _fmt_real(s.v),
                    s.switch_event or "",
                ])
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"could not write trace to {path}: {exc}") from exc


def parse_trace(path) -> List[TraceRow]:
    """Read back a trace CSV (used by the round-trip tests)."""
    rows: List[TraceRow] = []
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != TRACE_HEADER:
            raise ValueError(f"{path}: unexpected trace header {header!r}")
        for rec in reader:
            rows.append(TraceRow(
                step=int(rec[0]), stage=rec[1], gmres_iters=int(rec[2]),
                ferr=float(rec[3]), nbe=float(rec[4]), cbe=float(rec[5]),
                phi=float(rec[6]), z=float(rec[7]), v=float(rec[8]),
                switch_event=rec[9],
            ))
    return rows
