"""
Scans of ``sup_n log ||T_n(e^{i eta})||`` over angle grids, super-level sets
and box-counting dimension.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coeffs import VerblunskySequence
from .szego import sup_log_norms

__all__ = [
    "ScanReport",
    "DimensionFit",
    "standard_grid",
    "scan",
    "superlevel_set",
    "superlevel_fraction",
    "default_factors",
    "box_dimension",
    "write_scan",
    "read_scan",
    "write_dimension",
]

DEFAULT_GAP = 0.3
DEFAULT_GRID = 2**16


@dataclass
class ScanReport:
    """Per-angle supremum of ``log ||T_n||`` over ``n <= N_max`` and over ``betas``."""

    etas: np.ndarray
    sup_logT: np.ndarray
    argmax_n: np.ndarray
    failed: np.ndarray
    N_max: int
    betas: list
    seq_id: str
    gamma: float | None = None
    h: float | None = None

    @property
    def any_failed(self) -> bool:
        return bool(np.any(self.failed))


@dataclass
class DimensionFit:
    scales: list
    counts: list
    slope: float
    r2: float
    raw_slope: float = float("nan")
    empty: bool = False
    factors: list = field(default_factory=list)


def standard_grid(n: int = DEFAULT_GRID, gap: float = DEFAULT_GAP):
    """``n`` cell midpoints uniformly covering ``(gap, 2 pi - gap)``; returns ``(etas, h)``."""
    h = (2.0 * math.pi - 2.0 * gap) / n
    return gap + h * (np.arange(n) + 0.5), h


def _chunk_job(args):
    seq, etas, n_max, betas = args
    return _scan_serial(seq, etas, n_max, betas)


def _scan_serial(seq, etas, n_max, betas):
    sup = np.full(etas.size, -np.inf)
    arg = np.zeros(etas.size, dtype=np.int64)
    fail = np.zeros(etas.size, dtype=bool)
    for beta in betas:
        s, a, f = sup_log_norms(seq, etas, n_max, beta)
        better = s > sup
        sup = np.where(better, s, sup)
        arg = np.where(better, a, arg)
        fail |= f
    sup[fail] = np.nan
    return sup, arg, fail


def scan(
    seq: VerblunskySequence,
    grid,
    N_max: int,
    betas=(0.0, math.pi),
    workers: int = 1,
    gap: float | None = None,
    gamma: float | None = None,
) -> ScanReport:
    """
    Evolve every grid angle under each ``beta`` and keep the running maximum
    of ``log ||T_n||``.

    The grid is split into contiguous chunks, one per worker; each angle is
    computed independently, so the report does not depend on ``workers``.
    Angles whose evolution produces non-finite values are marked ``failed``
    and carry ``nan``.
    """
    etas = np.ascontiguousarray(grid, dtype=np.float64)
    if gap is not None and (np.any(etas <= gap) or np.any(etas >= 2 * math.pi - gap)):
        raise ValueError(f"grid leaves ({gap}, 2 pi - {gap})")
    if N_max > seq.n_max:
        raise ValueError("N_max exceeds the sequence length")
    betas = [float(b) for b in betas]
    workers = max(1, int(workers))
    if workers == 1 or etas.size < 2 * workers:
        sup, arg, fail = _scan_serial(seq, etas, N_max, betas)
    else:
        chunks = np.array_split(etas, workers)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_chunk_job, [(seq, c, N_max, betas) for c in chunks]))
        sup = np.concatenate([p[0] for p in parts])
        arg = np.concatenate([p[1] for p in parts])
        fail = np.concatenate([p[2] for p in parts])
    h = float(etas[1] - etas[0]) if etas.size > 1 else None
    return ScanReport(etas, sup, arg, fail, int(N_max), betas, seq.fingerprint(), gamma, h)


def superlevel_set(report: ScanReport, M: float) -> np.ndarray:
    """Indices of grid cells with ``sup_logT > log M`` (failed cells excluded)."""
    if M <= 0:
        raise ValueError("M must be positive")
    with np.errstate(invalid="ignore"):
        return np.flatnonzero(report.sup_logT > math.log(M))


def superlevel_fraction(report: ScanReport, M: float) -> float:
    return superlevel_set(report, M).size / report.etas.size


def default_factors(n_grid: int, fine: int = 4, coarse: int = 4) -> list:
    """
    Dyadic coarsening factors ``2^fine, ..., n_grid / 2^coarse``.

    On small grids the finest factor is lowered so that at least three
    scales remain.
    """
    top = int(math.log2(n_grid)) - coarse
    if top < 2:
        raise ValueError("grid too small for three dyadic scales")
    return [2**k for k in range(min(fine, top - 2), top + 1)]


def box_dimension(cells, factors, h: float = 1.0) -> DimensionFit:
    """
    Box-counting slope of a set of occupied grid cells.

    ``factors`` are integer coarsening factors: at factor ``f`` a box covers
    ``f`` consecutive grid cells (width ``f h``). The slope is the
    least-squares fit of ``log count`` against ``log(1/width)``, clipped
    to ``[0, 1]``; the unclipped value is kept as ``raw_slope``.
    """
    factors = [int(f) for f in factors]
    if len(set(factors)) < 3:
        raise ValueError("need at least 3 distinct scales")
    if any(f < 1 for f in factors):
        raise ValueError("coarsening factors must be positive integers")
    factors = sorted(set(factors))
    cells = np.unique(np.asarray(cells, dtype=np.int64))
    widths = [f * h for f in factors]
    if cells.size == 0:
        return DimensionFit(widths, [0] * len(factors), 0.0, 0.0, 0.0, True, factors)
    counts = [int(np.unique(cells // f).size) for f in factors]
    x = -np.log(np.array(widths))
    y = np.log(np.array(counts, dtype=np.float64))
    slope, icpt = np.polyfit(x, y, 1)
    pred = slope * x + icpt
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return DimensionFit(widths, counts, float(min(1.0, max(0.0, slope))), r2, float(slope), False, factors)


def write_scan(report: ScanReport, path) -> Path:
    """CSV with columns ``eta, sup_logT, argmax_n, failed``."""
    path = Path(path)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eta", "sup_logT", "argmax_n", "failed"])
        for e, s, a, f in zip(report.etas, report.sup_logT, report.argmax_n, report.failed):
            w.writerow([repr(float(e)), repr(float(s)), int(a), int(bool(f))])
    return path


def read_scan(path, N_max: int = 0, betas=(), seq_id: str = "") -> ScanReport:
    etas, sup, arg, fail = [], [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            etas.append(float(row["eta"]))
            sup.append(float(row["sup_logT"]))
            arg.append(int(row["argmax_n"]))
            fail.append(bool(int(row["failed"])))
    etas = np.array(etas)
    h = float(etas[1] - etas[0]) if etas.size > 1 else None
    return ScanReport(etas, np.array(sup), np.array(arg), np.array(fail), N_max, list(betas), seq_id, None, h)


def write_dimension(fit: DimensionFit, path) -> Path:
    """CSV with columns ``scale, count``."""
    path = Path(path)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scale", "count"])
        for s, c in zip(fit.scales, fit.counts):
            w.writerow([repr(float(s)), int(c)])
    return path
