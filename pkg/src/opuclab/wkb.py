"""
WKB transform against atomic measures and its sharp quadratic-form constant.

For an atomic measure ``nu = sum_k w_k delta_{eta_k}`` the supremum over
``f`` of ``sum_{s<=L} |int f e^{i omega(s, ., beta)} dnu|^2 / int |f|^2 dnu``
is exactly ``sigma_max(A)^2`` with ``A[s, k] = sqrt(w_k) e^{i omega(s, eta_k, beta)}``.
We compute that number by power iteration and keep a dense SVD around as an
independent oracle.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .coeffs import VerblunskySequence
from .measures import HolderMeasure
from .prufer import omega_table

__all__ = [
    "WkbResult",
    "ScalingFit",
    "PowerIterationError",
    "sampling_matrix",
    "power_iteration",
    "dense_lambda_max",
    "wkb_transform",
    "wkb_gram_norm",
    "scaling_fit",
    "block_bound_check",
    "block_sharp_constant",
    "sum_by_parts",
    "sum_by_parts_scale",
    "maximal_function",
    "maximal_functions",
    "kiselev_ratio",
    "write_results",
]

MAX_ITER = 10_000
RQ_TOL = 1e-10
RESIDUAL_TOL = 1e-8
VERIFY_SEED = 0
MAX_RESTARTS = 3
SQUARE_EVERY = 200
MAX_SQUARINGS = 30


class PowerIterationError(RuntimeError):
    """Power iteration hit the iteration cap; ``last`` holds the final iterate."""

    def __init__(self, msg, last):
        super().__init__(msg)
        self.last = last


@dataclass(frozen=True)
class WkbResult:
    L: int
    lambda_max: float
    ratio: float
    D: float
    beta: float
    iterations: int
    residual: float


class ScalingFit(NamedTuple):
    slope: float
    intercept: float
    max_ratio: float
    top_octave_trend: float


def sampling_matrix(measure: HolderMeasure, seq: VerblunskySequence, s_indices, beta: float = 0.0) -> np.ndarray:
    """``A[i, k] = sqrt(w_k) exp(i omega(s_i, eta_k, beta))``."""
    if np.any(measure.etas < measure.support_gap):
        raise ValueError("atoms violate the support gap")
    phase = omega_table(seq, s_indices, measure.etas, beta)
    return np.sqrt(measure.weights)[None, :] * np.exp(1j * phase)


def _power_loop(G, v, max_iter, rq_tol, res_tol, square_every, max_squarings):
    H = G
    squarings = 0
    lam_prev = -np.inf
    lam, res = 0.0, np.inf
    for it in range(1, max_iter + 1):
        w = G @ v
        lam = float(np.vdot(v, w).real)
        res = float(np.linalg.norm(w - lam * v))
        if lam <= 0.0 and float(np.linalg.norm(w)) == 0.0:
            return 0.0, v, it, 0.0
        if abs(lam - lam_prev) <= rq_tol * lam and res <= res_tol * lam:
            return lam, v, it, res
        lam_prev = lam
        if squarings < max_squarings and it % square_every == 0:
            H = H @ H
            H = 0.5 * (H + H.conj().T) / np.linalg.norm(H, ord="fro")
            squarings += 1
        u = w if H is G else H @ v
        v = u / np.linalg.norm(u)
    raise PowerIterationError(
        f"power iteration did not converge in {max_iter} steps (lambda={lam!r}, residual={res!r})",
        (lam, v, res),
    )


def power_iteration(
    G: np.ndarray,
    max_iter: int = MAX_ITER,
    rq_tol: float = RQ_TOL,
    res_tol: float = RESIDUAL_TOL,
    square_every: int = SQUARE_EVERY,
    max_squarings: int = MAX_SQUARINGS,
    verify: bool = True,
):
    """
    Largest eigenvalue of a Hermitian positive semidefinite matrix.

    Starts from the normalized all-ones vector. Stops once the Rayleigh
    quotient moves by less than ``rq_tol`` (relative) *and* the eigen-residual
    ``||G v - lambda v||`` is below ``res_tol * lambda``.

    When the top of the spectrum is nearly degenerate the residual decays
    slowly; after every ``square_every`` unconverged steps the iteration
    continues with the square of the current iteration matrix (at most
    ``max_squarings`` times), which squares the convergence ratio. Both
    stopping tests are always evaluated on ``G`` itself.

    The stopping tests certify an eigenpair but not that it is the top one:
    a start vector (nearly) orthogonal to the top eigenvector, as happens
    for symmetric measures, can settle on a lower eigenvalue a relative
    ``1e-5`` away. With ``verify`` the converged pair is checked by a second
    iteration on ``G - lambda v v*`` from a fixed seeded start; a direction
    with larger Rayleigh quotient restarts the main iteration from it.
    Rayleigh quotients never exceed the true maximum, so each restart can
    only move ``lambda`` up toward it.

    Returns
    -------
    lam, v, iterations, residual
    """
    dim = G.shape[0]
    opts = (max_iter, rq_tol, res_tol, square_every, max_squarings)
    v0 = np.full(dim, 1.0 / math.sqrt(dim), dtype=np.complex128)
    lam, v, iters, res = _power_loop(G, v0, *opts)
    if not verify or dim < 2 or lam == 0.0:
        return lam, v, iters, res
    rng = np.random.default_rng(VERIFY_SEED)
    for _ in range(MAX_RESTARTS):
        r = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        Gd = G - lam * np.outer(v, v.conj())
        try:
            _, u, extra, _ = _power_loop(Gd, r / np.linalg.norm(r), *opts)
        except PowerIterationError as exc:
            u, extra = exc.last[1], max_iter
        iters += extra
        if float(np.vdot(u, G @ u).real) <= lam * (1.0 + rq_tol):
            break
        lam, v, more, res = _power_loop(G, u, *opts)
        iters += more
    return lam, v, iters, res


def dense_lambda_max(A: np.ndarray) -> float:
    """``sigma_max(A)^2`` from a LAPACK SVD; used as the oracle."""
    return float(np.linalg.svd(A, compute_uv=False)[0] ** 2)


def wkb_transform(f, measure: HolderMeasure, seq: VerblunskySequence, s: int, beta: float = 0.0) -> complex:
    """``sum_k w_k f_k exp(i omega(s, eta_k, beta))``."""
    f = np.broadcast_to(np.asarray(f, dtype=np.complex128), measure.etas.shape)
    phase = omega_table(seq, [s], measure.etas, beta)[0]
    return complex(np.sum(measure.weights * f * np.exp(1j * phase)))


def _gram(A: np.ndarray, side: str) -> np.ndarray:
    if side == "auto":
        side = "atoms" if A.shape[1] <= A.shape[0] else "indices"
    if side == "atoms":
        return A.conj().T @ A
    if side == "indices":
        return A @ A.conj().T
    raise ValueError(f"unknown side {side!r}")


def wkb_gram_norm(
    measure: HolderMeasure,
    seq: VerblunskySequence,
    L: int,
    beta: float = 0.0,
    start: int = 0,
    D: float | None = None,
    side: str = "auto",
) -> WkbResult:
    """
    Sharp constant of ``sum_{s=start}^{start+L} |WKB f(s)|^2 <= C int |f|^2 dnu``.

    ``side`` picks the Gram matrix the power iteration runs on: ``A* A``
    (``"atoms"``), ``A A*`` (``"indices"``) or the smaller one (``"auto"``).
    """
    if L < 0:
        raise ValueError("L must be non-negative")
    if start + L > seq.n_max:
        raise ValueError("start + L exceeds the sequence length")
    D = measure.D_target if D is None else D
    A = sampling_matrix(measure, seq, np.arange(start, start + L + 1), beta)
    lam, _, it, res = power_iteration(_gram(A, side))
    return WkbResult(int(L), lam, lam / (L + 1) ** (1.0 - D), float(D), float(beta), it, res)


def scaling_fit(results) -> ScalingFit:
    """
    Least-squares slope of ``log lambda_max`` against ``log(L+1)``.

    ``top_octave_trend`` is the ratio ``lambda/(L+1)^(1-D)`` at the largest
    ``L`` divided by its value at the largest ``L`` at most half as big; a
    value near or below 1 means the ratio is not trending upward.
    """
    results = sorted(results, key=lambda r: r.L)
    Ls = sorted({r.L for r in results})
    if len(Ls) < 4:
        raise ValueError("scaling_fit needs at least 4 distinct L values")
    x = np.log(np.array([r.L for r in results], dtype=np.float64) + 1.0)
    y = np.log(np.array([r.lambda_max for r in results]))
    slope, intercept = np.polyfit(x, y, 1)
    ratios = np.array([r.ratio for r in results])
    top = results[-1]
    half = [r for r in results if r.L <= (top.L + 1) // 2]
    trend = top.ratio / half[-1].ratio if half else float("nan")
    return ScalingFit(float(slope), float(intercept), float(ratios.max()), float(trend))


def block_bound_check(measure: HolderMeasure, seq: VerblunskySequence, block, f, beta: float = 0.0, D: float | None = None):
    """
    Both sides of the block estimate for one sequence ``f`` on ``block``.

    ``lhs = int |sum_{s in block} f(s) e^{i omega(s, eta, beta)}|^2 dnu`` and
    ``rhs = (hi - lo)^(1-D) sum |f(s)|^2``.
    """
    lo, hi = int(block[0]), int(block[1])
    if not 0 <= lo < hi <= seq.n_max:
        raise ValueError("block outside the sequence range")
    D = measure.D_target if D is None else D
    f = np.asarray(f, dtype=np.complex128).reshape(-1)
    if f.size != hi - lo:
        raise ValueError("f must have one value per block index")
    A = sampling_matrix(measure, seq, np.arange(lo, hi), beta)  # rows s, columns atoms
    sums = A.T @ f  # sqrt(w_k) * sum_s f_s e^{i omega}
    lhs = float(np.sum(np.abs(sums) ** 2))
    rhs = (hi - lo) ** (1.0 - D) * float(np.sum(np.abs(f) ** 2))
    return lhs, rhs


def block_sharp_constant(measure: HolderMeasure, seq: VerblunskySequence, block, beta: float = 0.0) -> float:
    """``sup_f lhs / sum |f|^2`` for :func:`block_bound_check`, by power iteration on the index side."""
    lo, hi = int(block[0]), int(block[1])
    A = sampling_matrix(measure, seq, np.arange(lo, hi), beta)
    lam, _, _, _ = power_iteration(_gram(A, "indices"))
    return lam


def _check_range(a, b, Jl, Jr, need_next):
    if not 0 <= Jl <= Jr:
        raise IndexError("need 0 <= Jl <= Jr")
    if Jr >= len(a) or Jr + (1 if need_next else 0) >= len(b):
        raise IndexError("summation range exceeds the inputs")


def sum_by_parts(a, b, Jl: int, Jr: int, form: int = 1):
    """
    Evaluate both sides of a summation-by-parts identity.

    form 1::

        sum_{j=Jl}^{Jr} a_j (b_{j+1} - b_j)
            = a_{Jr} b_{Jr+1} - a_{Jl} b_{Jl} - sum_{j=Jl+1}^{Jr} b_j (a_j - a_{j-1})

    form 2::

        sum_{j=Jl}^{Jr} a_j b_j
            = a_{Jl} sum_{j=Jl}^{Jr} b_j + sum_{j=Jl}^{Jr-1} (a_{j+1} - a_j) sum_{k=j+1}^{Jr} b_k
    """
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if form == 1:
        _check_range(a, b, Jl, Jr, True)
        j = np.arange(Jl, Jr + 1)
        lhs = np.sum(a[j] * (b[j + 1] - b[j]))
        k = np.arange(Jl + 1, Jr + 1)
        rhs = (a[Jr] * b[Jr + 1] - a[Jl] * b[Jl]) - np.sum(b[k] * (a[k] - a[k - 1]))
    elif form == 2:
        _check_range(a, b, Jl, Jr, False)
        j = np.arange(Jl, Jr + 1)
        lhs = np.sum(a[j] * b[j])
        seg = b[Jl : Jr + 1]
        tails = np.cumsum(seg[::-1])[::-1]  # tails[i] = sum_{k >= Jl+i} b_k
        k = np.arange(Jl, Jr)
        rhs = a[Jl] * tails[0] + np.sum((a[k + 1] - a[k]) * tails[1:])
    else:
        raise ValueError("form must be 1 or 2")
    return complex(lhs), complex(rhs)


def sum_by_parts_scale(a, b, Jl: int, Jr: int) -> float:
    """Magnitude reference for the identities: ``max|a| * sum |b|`` over the range (plus one)."""
    a = np.abs(np.asarray(a))
    b = np.abs(np.asarray(b))
    hi_b = min(len(b), Jr + 2)
    return float(a[Jl : Jr + 1].max() * b[Jl:hi_b].sum() * 2.0 + 1e-300)


def maximal_functions(seq: VerblunskySequence, etas, beta: float, block) -> np.ndarray:
    """``max_{xi in block} |sum_{j=lo}^{xi} alpha_j e^{i omega(j, eta, beta)}|`` for each ``eta``."""
    lo, hi = int(block[0]), int(block[1])
    if not 0 <= lo < hi <= seq.n_max:
        raise ValueError("block outside the sequence range")
    etas = np.atleast_1d(np.asarray(etas, dtype=np.float64))
    phase = omega_table(seq, np.arange(lo, hi), etas, beta)
    terms = seq.values[lo:hi, None] * np.exp(1j * phase)
    return np.abs(np.cumsum(terms, axis=0)).max(axis=0)


def maximal_function(seq: VerblunskySequence, eta: float, beta: float, block) -> float:
    return float(maximal_functions(seq, [eta], beta, block)[0])


def kiselev_ratio(measure: HolderMeasure, seq: VerblunskySequence, block, p: float, beta: float = 0.0) -> float:
    """
    ``(int M^q dnu)^(1/q) / (sum_block |alpha|^p)^(1/p)`` with ``1/p + 1/q = 1``.

    Reported for information only; the maximal inequality's constant is unspecified.
    """
    if not 1.0 < p < 2.0:
        raise ValueError("p must lie in (1, 2)")
    q = p / (p - 1.0)
    M = maximal_functions(seq, measure.etas, beta, block)
    lo, hi = int(block[0]), int(block[1])
    den = float(np.sum(seq.moduli[lo:hi] ** p)) ** (1.0 / p)
    num = float(np.sum(measure.weights * M**q)) ** (1.0 / q)
    return num / den if den > 0 else 0.0


def write_results(results, path) -> Path:
    """CSV with columns ``L, lambda_max, ratio, slope_window``.

    ``slope_window`` is the local log-log slope from the previous grid point
    (empty on the first row).
    """
    path = Path(path)
    results = sorted(results, key=lambda r: r.L)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["L", "lambda_max", "ratio", "slope_window"])
        prev = None
        for r in results:
            sw = ""
            if prev is not None:
                sw = repr(math.log(r.lambda_max / prev.lambda_max) / math.log((r.L + 1) / (prev.L + 1)))
            w.writerow([r.L, repr(r.lambda_max), repr(r.ratio), sw])
            prev = r
    return path
