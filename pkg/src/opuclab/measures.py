"""
Finite atomic approximations of uniformly D-Holder measures on the circle.

The standard test measure is the midpoint-atom approximation of a
self-similar Cantor measure on ``[a, b]``; its dimension is exactly
``log 2 / log(1/ratio)``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "HolderMeasure",
    "cantor_measure",
    "cantor_intervals",
    "uniform_grid_measure",
    "point_mass",
    "holder_profile",
    "holder_constant",
    "integrate",
    "save_measure",
    "load_measure",
]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True, eq=False)
class HolderMeasure:
    """
    Atoms ``(eta_k, w_k)`` inside ``(support_gap, 2 pi - support_gap)``.

    ``D_target`` is the dimension the construction is meant to realize;
    ``holder_C`` is filled in by :func:`holder_constant` callers when known.
    """

    etas: np.ndarray
    weights: np.ndarray
    D_target: float
    support_gap: float
    level: int = 0
    holder_C: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        etas = np.array(self.etas, dtype=np.float64).reshape(-1)
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        if etas.shape != w.shape or etas.size == 0:
            raise ValueError("need matching, non-empty atom and weight arrays")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be positive and finite")
        d = self.support_gap
        if not d > 0 or np.any(etas < d) or np.any(etas > TWO_PI - d):
            raise ValueError("atoms must lie in [support_gap, 2 pi - support_gap]")
        order = np.argsort(etas, kind="stable")
        etas, w = etas[order], w[order]
        etas.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "etas", etas)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return int(self.etas.size)

    @property
    def total_mass(self) -> float:
        return math.fsum(self.weights)


def cantor_intervals(ratio: float, level: int, a: float, b: float) -> np.ndarray:
    """Left endpoints and common length of the generation-``level`` intervals."""
    lefts = np.array([a], dtype=np.float64)
    length = b - a
    for _ in range(level):
        child = ratio * length
        lefts = np.concatenate([lefts, lefts + (length - child)])
        lefts.sort(kind="stable")
        length = child
    return lefts, length


def cantor_measure(ratio: float, level: int, a: float, b: float) -> HolderMeasure:
    """
    Midpoint atoms of the ``level``-th Cantor generation on ``[a, b]``.

    Each generation keeps the two outer subintervals of relative length
    ``ratio``; all ``2**level`` atoms carry weight ``2**-level``.
    """
    if not 0.0 < ratio < 0.5:
        raise ValueError("ratio must lie in (0, 1/2)")
    if level < 0 or int(level) != level:
        raise ValueError("level must be a non-negative integer")
    if not 0.0 < a < b < TWO_PI:
        raise ValueError("degenerate support: need 0 < a < b < 2 pi")
    lefts, length = cantor_intervals(ratio, int(level), a, b)
    etas = lefts + 0.5 * length
    w = np.full(etas.size, 2.0 ** (-level))
    D = math.log(2.0) / math.log(1.0 / ratio)
    gap = min(a, TWO_PI - b)
    meta = {"kind": "cantor", "ratio": float(ratio), "a": float(a), "b": float(b)}
    return HolderMeasure(etas, w, D, gap, int(level), meta=meta)


def uniform_grid_measure(n_atoms: int, a: float, b: float) -> HolderMeasure:
    """Equal weights at cell midpoints of a uniform grid on ``[a, b]`` (dimension 1)."""
    h = (b - a) / n_atoms
    etas = a + h * (np.arange(n_atoms) + 0.5)
    meta = {"kind": "grid", "a": float(a), "b": float(b), "n_atoms": int(n_atoms)}
    return HolderMeasure(etas, np.full(n_atoms, 1.0 / n_atoms), 1.0, min(a, TWO_PI - b), meta=meta)


def point_mass(eta: float, weight: float = 1.0) -> HolderMeasure:
    gap = min(eta, TWO_PI - eta)
    return HolderMeasure([eta], [weight], 0.0, gap, meta={"kind": "point"})


def holder_profile(measure: HolderMeasure, D: float, scales) -> np.ndarray:
    """
    ``max_I nu(I) / |I|^D`` separately for each window length in ``scales``.

    Windows ``[t, t + s)`` slide with stride ``s/4`` from just left of the
    first atom to the last atom.
    """
    etas = measure.etas
    cum = np.concatenate(([0.0], np.cumsum(measure.weights)))
    out = []
    for s in scales:
        s = float(s)
        if s <= 0:
            raise ValueError("scales must be positive")
        starts = np.arange(etas[0] - s, etas[-1] + s / 4.0, s / 4.0)
        lo = np.searchsorted(etas, starts, side="left")
        hi = np.searchsorted(etas, starts + s, side="left")
        mass = cum[hi] - cum[lo]
        out.append(float(mass.max()) / s**D)
    return np.array(out)


def holder_constant(measure: HolderMeasure, D: float, scales) -> float:
    """Largest ``nu(I) / |I|^D`` over the sliding windows at all ``scales``."""
    return float(holder_profile(measure, D, scales).max())


def integrate(measure: HolderMeasure, f) -> complex:
    """
    ``sum_k w_k f(eta_k)``.

    ``f`` is either a callable evaluated on the atom array or an array of
    values, one per atom (in atom order).
    """
    vals = f(measure.etas) if callable(f) else f
    vals = np.broadcast_to(np.asarray(vals), measure.etas.shape)
    if not np.all(np.isfinite(vals)):
        raise ValueError("integrand is not finite on every atom")
    return complex(np.sum(measure.weights * vals))


def save_measure(measure: HolderMeasure, stem) -> tuple:
    """Write ``<stem>.csv`` (eta, w) and a JSON header ``<stem>.json``."""
    stem = Path(stem)
    csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
    with open(csv_path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eta", "w"])
        for e, wt in zip(measure.etas, measure.weights):
            w.writerow([repr(float(e)), repr(float(wt))])
    header = {
        **measure.meta,
        "level": measure.level,
        "D_target": measure.D_target,
        "support_gap": measure.support_gap,
    }
    json_path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path, json_path


def load_measure(path) -> HolderMeasure:
    """Load from a JSON header (regenerating Cantor measures) or a CSV atom list."""
    path = Path(path)
    if path.suffix == ".json":
        hdr = json.loads(path.read_text(encoding="utf-8"))
        if hdr.get("kind") == "cantor":
            return cantor_measure(hdr["ratio"], hdr["level"], hdr["a"], hdr["b"])
        csv_path = path.with_suffix(".csv")
    else:
        csv_path, hdr = path, {}
        jp = path.with_suffix(".json")
        if jp.exists():
            hdr = json.loads(jp.read_text(encoding="utf-8"))
    etas, ws = [], []
    with open(csv_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            etas.append(float(row["eta"]))
            ws.append(float(row["w"]))
    etas = np.array(etas)
    gap = hdr.get("support_gap", float(min(etas.min(), TWO_PI - etas.max())))
    return HolderMeasure(
        etas, ws, hdr.get("D_target", float("nan")), gap, hdr.get("level", 0), meta={"kind": "file"}
    )
