"""
Discrete Prufer variables for OPUC.

Writes ``Phi_n(exp(i eta), beta) = R_n exp(i (n eta + theta_n))`` and evolves
``log R_n`` and the unwrapped phase ``theta_n`` directly, together with the
derived phases ``tau`` and ``psi = omega + tau``.
"""

from __future__ import annotations

import cmath
import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .coeffs import VerblunskySequence
from .szego import CirclePoint, final_state

__all__ = [
    "PruferState",
    "initial_state",
    "prufer_step",
    "prufer_run",
    "PruferTrajectory",
    "omega",
    "omega_table",
    "fs_residual",
    "consistency_check",
    "tau_increment_ratios",
    "write_trajectory",
]


@dataclass(frozen=True)
class PruferState:
    """
    Prufer radius and phase after ``n`` steps at angle ``eta``.

    ``logR`` is kept with a Kahan compensation term ``logR_comp``;
    ``cum_mod2`` is ``sum_{j<n} |alpha_j|^2`` and ``fs_sum`` is
    ``sum_{j<n} Re(alpha_j exp(i psi_j))``.
    """

    n: int
    logR: float
    theta: float
    tau: float
    eta: float
    beta: float
    cum_mod2: float
    fs_sum: float = 0.0
    logR_comp: float = 0.0

    @property
    def psi(self) -> float:
        """``(n+1) eta + beta + 2 theta_n``."""
        return (self.n + 1) * self.eta + self.beta + 2.0 * self.theta

    @property
    def R(self) -> float:
        return math.exp(self.logR)


def initial_state(eta: float, beta: float = 0.0) -> PruferState:
    return PruferState(0, 0.0, 0.0, 0.0, float(eta), float(beta), 0.0)


def prufer_step(state: PruferState, alpha_n: complex) -> PruferState:
    """
    Advance one step with the (unrotated) coefficient ``alpha_n``.

    The radius update is ``R_{n+1}^2 / R_n^2 = |1 - alpha_n e^{i psi}|^2``
    and the phase update is ``theta_{n+1} - theta_n = -arg(1 - alpha_n e^{i psi})``.
    The principal argument is unambiguous because ``Re(1 - alpha e^{i psi}) > 0``
    for ``|alpha| < 1``, so every increment lies in ``(-pi/2, pi/2)``.
    """
    alpha_n = complex(alpha_n)
    mod2 = alpha_n.real * alpha_n.real + alpha_n.imag * alpha_n.imag
    if not mod2 < 1.0:
        raise ValueError("|alpha_n| must be < 1")
    ae = alpha_n * cmath.exp(1j * state.psi)
    w = 1.0 - ae
    dlog = math.log(abs(w))
    dtheta = -math.atan2(w.imag, w.real)
    if not (math.isfinite(dlog) and math.isfinite(dtheta)):
        raise FloatingPointError(f"non-finite Prufer update at step {state.n}")
    # Kahan summation for log R
    y = dlog - state.logR_comp
    t = state.logR + y
    comp = (t - state.logR) - y
    theta = state.theta + dtheta
    cum = state.cum_mod2 + mod2
    return PruferState(
        n=state.n + 1,
        logR=t,
        theta=theta,
        tau=2.0 * theta - cum / state.eta,
        eta=state.eta,
        beta=state.beta,
        cum_mod2=cum,
        fs_sum=state.fs_sum + ae.real,
        logR_comp=comp,
    )


def prufer_run(seq: VerblunskySequence, eta: float, beta: float = 0.0, n: int | None = None) -> PruferState:
    """Final state after ``n`` steps (default: the whole sequence)."""
    n = seq.n_max if n is None else n
    if n > seq.n_max:
        raise ValueError("n exceeds the sequence length")
    st = initial_state(eta, beta)
    for a in seq.values[:n]:
        st = prufer_step(st, a)
    return st


@dataclass
class PruferTrajectory:
    """Arrays indexed by ``n = 0..N`` from one Prufer evolution."""

    n: np.ndarray
    logR: np.ndarray
    theta: np.ndarray
    tau: np.ndarray
    cum_mod2: np.ndarray
    fs_residual: np.ndarray
    eta: float
    beta: float

    @classmethod
    def compute(cls, seq: VerblunskySequence, eta: float, beta: float = 0.0, n: int | None = None):
        n = seq.n_max if n is None else n
        if n > seq.n_max:
            raise ValueError("n exceeds the sequence length")
        out = np.empty((5, n + 1))
        st = initial_state(eta, beta)
        out[:, 0] = (0.0, 0.0, 0.0, 0.0, 0.0)
        for k, a in enumerate(seq.values[:n], start=1):
            st = prufer_step(st, a)
            out[:, k] = (st.logR, st.theta, st.tau, st.cum_mod2, st.logR + st.fs_sum)
        return cls(np.arange(n + 1), *out, eta=float(eta), beta=float(beta))

    def psi(self) -> np.ndarray:
        return (self.n + 1) * self.eta + self.beta + 2.0 * self.theta


def omega(seq: VerblunskySequence, s: int, eta: float, beta: float = 0.0) -> float:
    """``(s+1) eta + beta + (1/eta) sum_{k<s} |alpha_k|^2``."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    if not 0 <= s <= seq.n_max:
        raise IndexError("need 0 <= s <= n_max")
    mods = seq.moduli[:s]
    return (s + 1) * eta + beta + float(np.sum(mods * mods)) / eta


def omega_table(seq: VerblunskySequence, s, etas, beta: float = 0.0) -> np.ndarray:
    """
    ``omega(s_i, eta_k, beta)`` as a ``len(s) x len(etas)`` array.

    The partial sums of ``|alpha_k|^2`` are accumulated in index order, so a
    row equals :func:`omega` at that ``s`` up to the final rounding.
    """
    s = np.asarray(s, dtype=np.int64).reshape(-1)
    etas = np.asarray(etas, dtype=np.float64).reshape(-1)
    if np.any(etas <= 0):
        raise ValueError("eta must be positive")
    if s.size and (s.min() < 0 or s.max() > seq.n_max):
        raise IndexError("need 0 <= s <= n_max")
    cum = np.concatenate(([0.0], np.cumsum(seq.moduli**2)))
    S = cum[s]
    return (s[:, None] + 1) * etas[None, :] + beta + S[:, None] / etas[None, :]


def fs_residual(seq: VerblunskySequence, eta: float, beta: float = 0.0, n: int | None = None) -> float:
    """``log R_n + sum_{j<n} Re(alpha_j exp(i psi_j))``; zero for the free sequence."""
    st = prufer_run(seq, eta, beta, n)
    return st.logR + st.fs_sum


def consistency_check(seq: VerblunskySequence, eta: float, beta: float = 0.0, n: int | None = None) -> float:
    """
    Relative gap between the Prufer radius ``R_n`` and ``|Phi_n(e^{i eta})|``
    from the Szego recursion under the coefficients ``exp(i beta) alpha_n``.
    """
    n = seq.n_max if n is None else n
    st = prufer_run(seq, eta, beta, n)
    sz = final_state(seq, CirclePoint(eta), n, beta)
    # both sides in log space, so large radii do not overflow
    log_monic = math.log(abs(sz.phi)) + sz.log2_scale * math.log(2.0) + math.log(sz.monic_scale)
    return abs(math.expm1(st.logR - log_monic))


def tau_increment_ratios(traj: PruferTrajectory, seq: VerblunskySequence) -> np.ndarray:
    """
    ``|tau(n+1) - tau(n)| / (|alpha_n| + |alpha_{n+1}|)`` for every step.

    Steps where both coefficients vanish are dropped (the increment is zero there).
    """
    dtau = np.abs(np.diff(traj.tau))
    m = seq.moduli
    n_steps = dtau.size
    nxt = np.zeros(n_steps)
    nxt[: min(n_steps, m.size - 1)] = m[1 : n_steps + 1]
    denom = m[:n_steps] + nxt
    keep = denom > 0
    return dtau[keep] / denom[keep]


def write_trajectory(traj: PruferTrajectory, path) -> Path:
    """CSV with columns ``n, logR, theta, tau, fs_residual``."""
    path = Path(path)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "logR", "theta", "tau", "fs_residual"])
        for row in zip(traj.n, traj.logR, traj.theta, traj.tau, traj.fs_residual):
            w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])
    return path
