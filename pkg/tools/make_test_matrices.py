#!/usr/bin/env python3
"""Generate the bundled test matrices.

The solver test suite exercises nine small real-world-style systems
whose names, dimensions, nonzero counts and infinity-norm condition
numbers follow a well-known SuiteSparse subset.  The original files are
not redistributable through this repository's offline build, so this
script builds deterministic surrogates with the same name, size, nnz
and (to ~1%) the same kappa_inf, and with the structural character that
drives solver behavior:

* moderately conditioned sparse cores (cage5, cage6, bfwa62, tols90,
  Hamrle1): diagonally dominant random pattern, dominance tuned until
  kappa_inf hits the target;
* badly row-scaled but intrinsically benign systems (d_dyn, d_ss,
  steam3): a well-conditioned core with a graded row scaling, grade
  tuned to the target kappa_inf;
* a genuinely ill-conditioned system (ww_36_pmec_36): a sparse core
  shifted close to one of its real eigenvalues.

Run from the repository root:  python3 tools/make_test_matrices.py
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

OUT_DIR = Path(__file__).resolve().parents[1] / "src" / "tsir" / "data"

TARGETS = {
    # name: (n, nnz, kappa_inf, style)
    "cage6": (93, 785, 2.34e1, "dominant"),
    "tols90": (90, 1746, 3.14e4, "shifted"),
    "bfwa62": (62, 450, 1.54e3, "shifted"),
    "cage5": (37, 233, 2.91e1, "dominant"),
    "d_dyn": (87, 230, 8.71e6, "rowscaled"),
    "d_ss": (53, 144, 6.02e8, "rowscaled"),
    "Hamrle1": (32, 98, 5.51e5, "shifted"),
    "ww_36_pmec_36": (66, 1194, 4.283e11, "shifted"),
    "steam3": (80, 314, 7.64e10, "rowscaled"),
}


def kappa_inf_f64(a):
    inv = np.linalg.inv(a)
    return np.abs(a).sum(1).max() * np.abs(inv).sum(1).max()


def sparsity_pattern(n, nnz, rng):
    """Full diagonal plus random off-diagonal cells, exactly nnz total."""
    off_needed = nnz - n
    cells = [(i, j) for i in range(n) for j in range(n) if i != j]
    idx = rng.choice(len(cells), size=off_needed, replace=False)
    mask = np.zeros((n, n), dtype=bool)
    np.fill_diagonal(mask, True)
    for k in idx:
        mask[cells[k]] = True
    return mask


def core_matrix(n, nnz, rng, offdiag=0.5):
    mask = sparsity_pattern(n, nnz, rng)
    a = np.zeros((n, n))
    off = mask & ~np.eye(n, dtype=bool)
    vals = rng.standard_normal(off.sum())
    vals[vals == 0.0] = 0.5
    a[off] = offdiag * vals
    diag = (1.0 + np.abs(rng.standard_normal(n))) * np.where(rng.random(n) < 0.5, -1.0, 1.0)
    a[np.diag_indices(n)] = diag
    return a


def tune(build, lo, hi, target, iters=60):
    """Bisection on a scalar knob; build(knob) -> matrix."""
    flo = kappa_inf_f64(build(lo))
    fhi = kappa_inf_f64(build(hi))
    if not (min(flo, fhi) <= target <= max(flo, fhi)):
        raise RuntimeError(f"target {target:g} outside [{flo:g}, {fhi:g}]")
    increasing = fhi > flo
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        f = kappa_inf_f64(build(mid))
        if (f < target) == increasing:
            lo = mid
        else:
            hi = mid
    return build(0.5 * (lo + hi))


def make_dominant(n, nnz, kappa_target, seed):
    rng = np.random.default_rng(seed)
    base = core_matrix(n, nnz, rng)

    def build(t):
        # shrink the diagonal towards singularity as t -> 0
        a = base.copy()
        d = np.diag(base).copy()
        a[np.diag_indices(n)] = np.sign(d) * (np.abs(d) * t + 1e-3)
        return a

    return tune(build, 1e-6, 50.0, kappa_target)


def make_rowscaled(n, nnz, kappa_target, seed):
    rng = np.random.default_rng(seed)
    base = core_matrix(n, nnz, rng, offdiag=0.35)
    base[np.diag_indices(n)] *= 3.0  # comfortably dominant core
    grade = rng.permutation(np.linspace(0.0, 1.0, n))

    def build(s):
        return base * (10.0 ** (-s * grade))[:, None]

    return tune(build, 0.0, 14.0, kappa_target)


def make_shifted(n, nnz, kappa_target, seed):
    rng = np.random.default_rng(seed)
    base = core_matrix(n, nnz, rng)
    eig = np.linalg.eigvals(base)
    real = eig[np.abs(eig.imag) < 1e-12].real
    if real.size == 0:
        raise RuntimeError("no real eigenvalue to shift against")
    lam = real[np.argmax(np.abs(real))]

    def build(logdelta):
        delta = 10.0 ** logdelta
        a = base.copy()
        a[np.diag_indices(n)] -= lam - np.sign(lam) * delta
        return a

    return tune(build, -14.0, 2.0, kappa_target)


def write_mm(path, a, comment):
    n, m = a.shape
    rows, cols = np.nonzero(a.T)  # column-major entry order
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"% {comment}\n")
        fh.write(f"{n} {m} {len(rows)}\n")
        for j, i in zip(rows, cols):
            fh.write(f"{i + 1} {j + 1} {a[i, j]:.16e}\n")


def main():
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    builders = {"dominant": make_dominant, "rowscaled": make_rowscaled,
                "shifted": make_shifted}
    for idx, (name, (n, nnz, kappa, style)) in enumerate(TARGETS.items()):
        a = builders[style](n, nnz, kappa, seed=1000 + idx)
        got = kappa_inf_f64(a)
        count = int(np.count_nonzero(a))
        assert count == nnz, (name, count, nnz)
        write_mm(OUT_DIR / f"{name}.mtx", a,
                 f"synthetic surrogate '{name}': n={n} nnz={nnz} kappa_inf~{kappa:.3g}")
        print(f"{name:16s} n={n:3d} nnz={count:5d} kappa_inf={got:.4g} (target {kappa:.4g})")


if __name__ == "__main__":
    main()
