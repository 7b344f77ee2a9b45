"""
Verblunsky coefficient sequences and their block partitions.

Sequences are finite, immutable and fully reproducible from
``(family, params, seed, n_max)``. The partition helpers build the dyadic
block endpoints, the per-block diagnostics and the nested adaptive
subdivision used to control oscillatory sums block by block.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "FAMILIES",
    "PHASE_STREAM",
    "VerblunskySequence",
    "PartitionPlan",
    "AdaptiveCells",
    "gen_power_decay",
    "gen_random_weighted",
    "gen_sparse",
    "from_values",
    "rotate",
    "weighted_tail",
    "weighted_partial_sums",
    "dyadic_partition",
    "block_count",
    "default_goal_exponent",
    "block_diagnostics",
    "adaptive_partition",
    "cell_masses",
    "verify_dichotomy",
    "build_plan",
    "regenerate",
    "save_sequence",
    "load_sequence",
]

FAMILIES = ("power_decay", "random_weighted", "sparse", "explicit")

# Phases are drawn from this stream; bump the suffix if the draw procedure changes.
PHASE_STREAM = "pcg64-v1"

RANDOM_WEIGHTED_C = 0.9
MAX_ADAPTIVE_CELLS = 2**20


@dataclass(frozen=True, eq=False)
class VerblunskySequence:
    """
    Finite sequence of Verblunsky coefficients with provenance.

    Attributes
    ----------
    values : numpy.ndarray
        Complex coefficients, one per index ``n = 0, ..., n_max - 1``.
        Stored read-only.
    family : str
        One of :data:`FAMILIES`.
    params : dict
        Family parameters needed for exact regeneration.
    seed : int
        Seed of the phase stream (unused by ``explicit``).
    moduli : numpy.ndarray, optional
        Exact moduli when known from a closed form; every modulus-derived
        diagnostic reads these so that rotations leave them bit-identical.
        Defaults to ``abs(values)``.
    """

    values: np.ndarray
    family: str = "explicit"
    params: dict = field(default_factory=dict)
    seed: int = 0
    moduli: np.ndarray | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.complex128, copy=True).reshape(-1)
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if vals.size and not np.all(np.isfinite(vals)):
            raise ValueError("coefficients must be finite")
        if vals.size and np.max(np.abs(vals)) >= 1.0:
            raise ValueError("every coefficient must lie in the open unit disk")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.moduli is None:
            mod = np.abs(vals)
        else:
            mod = np.array(self.moduli, dtype=np.float64, copy=True).reshape(-1)
            if mod.shape != vals.shape or not np.allclose(mod, np.abs(vals), rtol=1e-14, atol=0):
                raise ValueError("moduli disagree with |values|")
        mod.setflags(write=False)
        object.__setattr__(self, "moduli", mod)

    @property
    def n_max(self) -> int:
        return int(self.values.size)

    def __len__(self):
        return self.n_max

    def __eq__(self, other):
        if not isinstance(other, VerblunskySequence):
            return NotImplemented
        return (
            self.family == other.family
            and self.seed == other.seed
            and self.params == other.params
            and np.array_equal(self.values, other.values)
        )

    def fingerprint(self) -> str:
        """SHA-256 of the raw coefficient bytes (first 16 hex digits)."""
        return hashlib.sha256(self.values.tobytes()).hexdigest()[:16]

    def spec(self) -> dict:
        """JSON-ready regeneration record."""
        return {
            "family": self.family,
            "params": self.params,
            "seed": int(self.seed),
            "n_max": self.n_max,
            "phase_stream": PHASE_STREAM,
        }


@dataclass
class PartitionPlan:
    """
    Dyadic block endpoints plus optional per-block refinement data.

    ``x[0] == 0`` and every later endpoint is a power of two. The last block
    may extend past ``n_max`` while the sequence is still being truncated;
    such a block is *partial* and excluded from :meth:`completed_blocks`.
    """

    x: list
    n_max: int
    D: float | None = None
    N: list = field(default_factory=list)
    depth: int | None = None
    nested: list = field(default_factory=list)

    @property
    def blocks(self) -> list:
        return [(self.x[i - 1], self.x[i]) for i in range(1, len(self.x))]

    def completed_blocks(self) -> list:
        return [(lo, hi) for lo, hi in self.blocks if hi <= self.n_max]

    @property
    def has_partial(self) -> bool:
        return len(self.x) > 1 and self.x[-1] > self.n_max


@dataclass
class AdaptiveCells:
    """Result of :func:`adaptive_partition` for one block."""

    points: list
    threshold: float
    M: int
    budget: int
    over_budget: bool

    @property
    def cells(self) -> list:
        p = self.points
        return [(p[m - 1], p[m]) for m in range(1, len(p))]


def _phases(seed: int, n: int) -> np.ndarray:
    # Sequential uniform draws: the first k phases do not depend on n.
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))
    return rng.uniform(0.0, 2.0 * np.pi, size=n)


def _check_n_max(n_max):
    if int(n_max) != n_max or n_max < 1:
        raise ValueError("n_max must be a positive integer")


def gen_power_decay(c: float, delta: float, seed: int, n_max: int) -> VerblunskySequence:
    """
    Coefficients ``c (1+n)^(-delta) exp(i phi_n)`` with seeded uniform phases.

    Raises
    ------
    ValueError
        If ``c >= 1`` (the coefficient at ``n = 0`` would leave the disk),
        ``c < 0`` or ``delta <= 0``.
    """
    if not 0.0 <= c < 1.0:
        raise ValueError("power_decay needs 0 <= c < 1")
    if delta <= 0:
        raise ValueError("power_decay needs delta > 0")
    _check_n_max(n_max)
    n = np.arange(n_max, dtype=np.float64)
    mod = c * (1.0 + n) ** (-float(delta))
    vals = mod * np.exp(1j * _phases(seed, n_max))
    params = {"c": float(c), "delta": float(delta)}
    return VerblunskySequence(vals, "power_decay", params, int(seed), moduli=mod)


def gen_random_weighted(gamma: float, margin: float, seed: int, n_max: int) -> VerblunskySequence:
    """
    Random-phase coefficients in the weighted-l2 class of exponent ``gamma``.

    Moduli are ``0.9 (1+n)^(-(1+gamma+margin)/2)``, so that
    ``sum n^gamma |alpha_n|^2`` behaves like ``sum n^(-1-margin)`` and converges.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    if margin <= 0:
        raise ValueError("margin must be positive")
    _check_n_max(n_max)
    expo = (1.0 + gamma + margin) / 2.0
    n = np.arange(n_max, dtype=np.float64)
    mod = RANDOM_WEIGHTED_C * (1.0 + n) ** (-expo)
    vals = mod * np.exp(1j * _phases(seed, n_max))
    params = {"gamma": float(gamma), "margin": float(margin), "c": RANDOM_WEIGHTED_C}
    return VerblunskySequence(vals, "random_weighted", params, int(seed), moduli=mod)


def gen_sparse(indices, c: float, delta: float, seed: int, n_max: int) -> VerblunskySequence:
    """Power-decay moduli kept only on ``indices``; zero elsewhere."""
    if not 0.0 <= c < 1.0:
        raise ValueError("sparse needs 0 <= c < 1")
    if delta < 0:
        raise ValueError("sparse needs delta >= 0")
    _check_n_max(n_max)
    idx = sorted({int(i) for i in indices})
    if idx and (idx[0] < 0 or idx[-1] >= n_max):
        raise ValueError("sparse indices must lie in [0, n_max)")
    phases = _phases(seed, n_max)
    mod = np.zeros(n_max, dtype=np.float64)
    mod[idx] = c * (1.0 + np.asarray(idx, dtype=np.float64)) ** (-float(delta))
    vals = mod * np.exp(1j * phases)
    params = {"indices": idx, "c": float(c), "delta": float(delta)}
    return VerblunskySequence(vals, "sparse", params, int(seed), moduli=mod)


def from_values(values) -> VerblunskySequence:
    """Wrap an explicit list of coefficients."""
    return VerblunskySequence(np.asarray(values, dtype=np.complex128), "explicit", {}, 0)


def rotate(seq: VerblunskySequence, beta: float) -> VerblunskySequence:
    """Multiply every coefficient by ``exp(i beta)``; moduli are carried over unchanged."""
    beta = float(beta)
    if beta == 0.0:
        return seq
    if beta == math.pi:
        vals = -seq.values  # exact sign flip
    else:
        vals = seq.values * complex(math.cos(beta), math.sin(beta))
    params = {"rotated_from": seq.spec(), "beta": beta}
    return VerblunskySequence(vals, "explicit", params, seq.seed, moduli=seq.moduli)


def weighted_partial_sums(seq: VerblunskySequence, gamma: float) -> np.ndarray:
    """
    Running sums ``sum_{k<=n} k^gamma |alpha_k|^2`` for every ``n``.

    The ``k = 0`` weight is ``0`` for ``gamma > 0`` and ``1`` for ``gamma == 0``.
    """
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    k = np.arange(seq.n_max, dtype=np.float64)
    with np.errstate(divide="ignore"):
        w = k**gamma if gamma > 0 else np.ones_like(k)
    if gamma > 0:
        w[0] = 0.0
    return np.cumsum(w * seq.moduli**2)


def weighted_tail(seq: VerblunskySequence, gamma: float, n: int) -> float:
    """``sum_{k=0}^{n} k^gamma |alpha_k|^2`` with the convention ``0^gamma = 0`` for ``gamma > 0``."""
    if not 0 <= n < seq.n_max:
        raise IndexError("need 0 <= n < n_max")
    return float(weighted_partial_sums(seq, gamma)[n])


def dyadic_partition(seq: VerblunskySequence) -> PartitionPlan:
    """
    Power-of-two block endpoints, each block holding a nonzero coefficient.

    ``x[0] = 0`` and ``x[k+1]`` is the smallest power of two above ``x[k]``
    such that ``[x[k], x[k+1])`` contains a nonzero coefficient. Construction
    stops when no nonzero coefficient remains at or beyond the last endpoint.
    A final block whose endpoint overshoots ``n_max`` is kept and marked
    partial by the plan.
    """
    nz = np.flatnonzero(seq.moduli)
    if nz.size == 0:
        raise ValueError("finitely supported / trivial partition: sequence is identically zero")
    x = [0]
    while True:
        lo = x[-1]
        # first nonzero index at or after lo
        pos = np.searchsorted(nz, lo)
        if pos == nz.size:
            break
        j = int(nz[pos])
        # smallest power of two p > lo with p > j
        p = 1
        while p <= max(lo, j):
            p *= 2
        x.append(p)
        if p >= seq.n_max:
            break
    return PartitionPlan(x=x, n_max=seq.n_max)


def block_count(weighted: float) -> int:
    """``max(1, floor(1 / sqrt(weighted)))`` with ``weighted = dx^(1-D) ||alpha||_2^2``."""
    if weighted <= 0:
        raise ValueError("block carries no l2 mass")
    return max(1, int(math.floor(1.0 / math.sqrt(weighted))))


def default_goal_exponent(gamma: float, D: float) -> int:
    """Smallest integer strictly above ``(2 - gamma - D) / (D + gamma - 1)``."""
    if not 1.0 - gamma < D < 1.0:
        raise ValueError("need D in (1 - gamma, 1)")
    bound = (2.0 - gamma - D) / (D + gamma - 1.0)
    return int(math.floor(bound)) + 1


def block_diagnostics(
    seq: VerblunskySequence,
    plan: PartitionPlan,
    D: float,
    gamma: float | None = None,
    N: int | None = None,
) -> list:
    """
    Per-block norms and the summability terms used by the block argument.

    Returns one dict per completed block with keys ``n, lo, hi, dx, l1, l2,
    weighted, goal, goal2, N_n, window``. ``goal`` is
    ``dx^((1-D)/2) ||alpha||_2``, ``goal2`` is ``||alpha||_1 goal^N`` and
    ``window`` is ``N_n sqrt(weighted)``.
    """
    if not 0.0 < D < 1.0:
        raise ValueError("D must lie in (0, 1)")
    if gamma is not None and not 1.0 - gamma < D:
        warnings.warn(f"D={D} is outside ({1 - gamma}, 1) for gamma={gamma}", stacklevel=2)
    if N is None:
        if gamma is None:
            raise ValueError("supply N or gamma")
        N = default_goal_exponent(gamma, D)
    mod = seq.moduli
    rows = []
    for n, (lo, hi) in enumerate(plan.blocks, start=1):
        if hi > seq.n_max:
            break
        seg = mod[lo:hi]
        dx = hi - lo
        l1 = float(np.sum(seg))
        l2sq = float(np.sum(seg * seg))
        l2 = math.sqrt(l2sq)
        weighted = dx ** (1.0 - D) * l2sq
        goal = dx ** ((1.0 - D) / 2.0) * l2
        Nn = block_count(weighted) if weighted > 0 else 1
        rows.append(
            {
                "n": n,
                "lo": lo,
                "hi": hi,
                "dx": dx,
                "l1": l1,
                "l2": l2,
                "weighted": weighted,
                "goal": goal,
                "goal2": l1 * goal**N,
                "N_n": Nn,
                "window": Nn * math.sqrt(weighted),
            }
        )
    return rows


def adaptive_partition(seq: VerblunskySequence, block, N_n: int, j: int) -> AdaptiveCells:
    """
    Greedy subdivision of one block into small-l1 cells and singletons.

    With ``t = ||alpha||_1(block) N_n^(-3j/4)``, points ``z_m`` are chosen
    greedily as the smallest integer after ``z_{m-1}`` at which the running
    l1 mass of ``[z_{m-1}, z_m)`` exceeds ``t``; once no such point remains
    below the right endpoint the last point is the endpoint itself. Every
    ``z_m - 1`` is then inserted and the list is padded with the right
    endpoint up to ``N_n^j + 1`` points.

    After sorting, each cell ``[z_{m-1}, z_m)`` is empty, a singleton, or has
    l1 mass at most ``t``. When the greedy points do not fit into
    ``N_n^j`` cells (small ``N_n``) they are all kept and ``over_budget`` is
    set; the dichotomy still holds.
    """
    lo, hi = int(block[0]), int(block[1])
    if not 0 <= lo < hi <= seq.n_max:
        raise ValueError("block must satisfy 0 <= lo < hi <= n_max")
    if N_n < 1 or j < 1:
        raise ValueError("need N_n >= 1 and j >= 1")
    budget = N_n**j
    if budget > MAX_ADAPTIVE_CELLS:
        raise OverflowError(f"N_n^j = {budget} cells exceeds the limit {MAX_ADAPTIVE_CELLS}")

    mod = seq.moduli[lo:hi]
    total = float(np.sum(mod))
    threshold = total * N_n ** (-0.75 * j)

    # prefix[i] = mass of [lo, lo + i)
    prefix = np.concatenate(([0.0], np.cumsum(mod)))
    greedy = []
    start = 0
    while True:
        # smallest end e > start with prefix[e] - prefix[start] > threshold
        target = prefix[start] + threshold
        e = int(np.searchsorted(prefix, target, side="right"))
        while e <= hi - lo and prefix[e] - prefix[start] <= threshold:
            e += 1
        if e >= hi - lo:
            greedy.append(hi)
            break
        greedy.append(lo + e)
        start = e
    M = len(greedy)
    pts = {lo, *greedy, *(z - 1 for z in greedy)}
    pts = sorted(p for p in pts if lo <= p <= hi)
    over = len(pts) - 1 > budget
    if not over:
        pts = pts + [hi] * (budget + 1 - len(pts))
    return AdaptiveCells(points=pts, threshold=threshold, M=M, budget=budget, over_budget=over)


def cell_masses(seq: VerblunskySequence, points) -> list:
    """l1 mass of every cell ``[points[m-1], points[m])``, summed term by term."""
    out = []
    for a, b in zip(points[:-1], points[1:]):
        out.append(math.fsum(float(seq.moduli[i]) for i in range(a, b)))
    return out


def verify_dichotomy(seq: VerblunskySequence, cells: AdaptiveCells) -> bool:
    """Independent recomputation: every cell is empty, a singleton, or light."""
    pts = cells.points
    if pts != sorted(pts):
        return False
    for (a, b), mass in zip(zip(pts[:-1], pts[1:]), cell_masses(seq, pts)):
        if b - a <= 1:
            continue
        if mass > cells.threshold:
            return False
    return True


def build_plan(
    seq: VerblunskySequence,
    D: float,
    gamma: float | None = None,
    j: int = 1,
    N: int | None = None,
) -> PartitionPlan:
    """Dyadic partition with block counts ``N_n`` and adaptive points for every completed block."""
    plan = dyadic_partition(seq)
    diag = block_diagnostics(seq, plan, D, gamma=gamma, N=N if N is not None else (None if gamma else 1))
    plan.D = D
    plan.depth = j
    plan.N = [row["N_n"] for row in diag]
    plan.nested = [
        adaptive_partition(seq, (row["lo"], row["hi"]), row["N_n"], j).points for row in diag
    ]
    return plan


def regenerate(spec: dict) -> VerblunskySequence:
    """Rebuild a sequence from its :meth:`VerblunskySequence.spec` record."""
    fam = spec["family"]
    p = spec.get("params", {})
    seed, n_max = int(spec.get("seed", 0)), int(spec["n_max"])
    if fam == "power_decay":
        return gen_power_decay(p["c"], p["delta"], seed, n_max)
    if fam == "random_weighted":
        return gen_random_weighted(p["gamma"], p["margin"], seed, n_max)
    if fam == "sparse":
        return gen_sparse(p["indices"], p["c"], p["delta"], seed, n_max)
    raise ValueError(f"family {fam!r} cannot be regenerated from parameters; load its CSV")


def save_sequence(seq: VerblunskySequence, stem) -> tuple:
    """Write ``<stem>.csv`` (n, re, im) and ``<stem>.json`` (regeneration record)."""
    stem = Path(stem)
    csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
    with open(csv_path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "re", "im"])
        for n, v in enumerate(seq.values):
            w.writerow([n, repr(float(v.real)), repr(float(v.imag))])
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(seq.spec(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path


def load_sequence(path) -> VerblunskySequence:
    """
    Load a sequence from a JSON regeneration record or a CSV value dump.

    A JSON record of an ``explicit`` sequence is resolved through the CSV
    next to it.
    """
    path = Path(path)
    if path.suffix == ".json":
        spec = json.loads(path.read_text(encoding="utf-8"))
        if spec["family"] in ("power_decay", "random_weighted", "sparse"):
            return regenerate(spec)
        path = path.with_suffix(".csv")
    vals = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            vals.append(complex(float(row["re"]), float(row["im"])))
    return from_values(vals)
