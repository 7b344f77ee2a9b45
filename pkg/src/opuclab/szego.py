"""
Pointwise Szego recursion on the unit circle.

Polynomials are carried as their values at one point ``z = exp(i eta)``;
no coefficient vectors are ever formed. The same update is available as a
Python generator (:func:`evolve`) and as a compiled kernel
(:func:`sup_log_norms`) that only keeps the running supremum of
``log ||T_n||`` for many angles at once.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .coeffs import VerblunskySequence, rotate

__all__ = [
    "CirclePoint",
    "Matrix2",
    "SzegoState",
    "opnorm2",
    "transfer_matrix",
    "evolve",
    "final_state",
    "second_kind_equivalence",
    "sup_log_norms",
    "write_trajectory",
]

RESCALE_AT = 1e150
RESCALE_EXP = 498  # rescale by 2**-498; exact in binary floating point
_LOG2 = math.log(2.0)
GATE_SLACK = 1.0 - 1e-9


@dataclass(frozen=True)
class CirclePoint:
    """Angle ``eta`` and the point ``z = exp(i eta)``."""

    eta: float

    @property
    def z(self) -> complex:
        return complex(math.cos(self.eta), math.sin(self.eta))


def _as_point(z) -> CirclePoint:
    if isinstance(z, CirclePoint):
        return z
    return CirclePoint(float(z))


def opnorm2(a, b, c, d):
    """
    Largest singular value of ``[[a, b], [c, d]]``.

    Uses ``F^2 -+ 2|det| = |a -+ u conj(d)|^2 + |b +- u conj(c)|^2`` with
    ``u = det/|det|`` so that near-unitary matrices do not lose half their
    digits to cancellation. Entries are scaled by the largest modulus first
    so that squares neither overflow nor underflow.
    """
    m = max(abs(a), abs(b), abs(c), abs(d))
    if m == 0.0 or not math.isfinite(m):
        return m
    a, b, c, d = a / m, b / m, c / m, d / m
    det = a * d - b * c
    ad = abs(det)
    if ad > 0.0:
        u = det / ad
    else:
        u = 1.0 + 0.0j
    ud = u * d.conjugate()
    uc = u * c.conjugate()
    s_plus = abs(a + ud) ** 2 + abs(b - uc) ** 2
    s_minus = abs(a - ud) ** 2 + abs(b + uc) ** 2
    return 0.5 * (math.sqrt(s_plus) + math.sqrt(s_minus)) * m


_opnorm2_jit = numba.njit(cache=True)(opnorm2)


@dataclass(frozen=True, slots=True)
class Matrix2:
    """2x2 complex matrix ``[[a, b], [c, d]]``."""

    a: complex
    b: complex
    c: complex
    d: complex

    @classmethod
    def identity(cls):
        return cls(1 + 0j, 0j, 0j, 1 + 0j)

    def __matmul__(self, o: "Matrix2") -> "Matrix2":
        return Matrix2(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )

    def scaled(self, s: float) -> "Matrix2":
        return Matrix2(self.a * s, self.b * s, self.c * s, self.d * s)

    def det(self) -> complex:
        return self.a * self.d - self.b * self.c

    def norm(self) -> float:
        return opnorm2(complex(self.a), complex(self.b), complex(self.c), complex(self.d))

    def to_array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]], dtype=np.complex128)


def transfer_matrix(alpha: complex, z) -> Matrix2:
    """One Szego step ``(1/rho) [[z, -conj(alpha)], [-alpha z, 1]]``."""
    alpha = complex(alpha)
    m = abs(alpha)
    if not m < 1.0:
        raise ValueError("|alpha| must be < 1")
    zz = _as_point(z).z if not isinstance(z, complex) else z
    rho = math.sqrt((1.0 - m) * (1.0 + m))
    return Matrix2(zz / rho, -alpha.conjugate() / rho, -alpha * zz / rho, 1.0 / rho)


@dataclass(frozen=True)
class SzegoState:
    """
    Values of the orthonormal polynomials of both kinds at one circle point.

    ``phi``, ``phi_star``, ``psi``, ``psi_star`` and ``T`` are stored divided
    by ``2**log2_scale``; ``log_norm`` is the true ``log ||T_n||`` and
    ``sup_log_norm`` its running maximum over ``0..n``. ``monic_scale`` is
    ``prod_{j<n} rho_j``, so ``Phi_n = monic_scale * phi_n``.
    """

    n: int
    phi: complex
    phi_star: complex
    psi: complex
    psi_star: complex
    T: Matrix2
    monic_scale: float
    log2_scale: int
    log_norm: float
    sup_log_norm: float
    argmax_n: int

    @property
    def scale(self) -> float:
        return math.ldexp(1.0, self.log2_scale)

    @property
    def monic(self) -> complex:
        """``Phi_n(z)`` (monic first kind), unscaled."""
        return self.phi * self.scale * self.monic_scale


def evolve(seq: VerblunskySequence, z, n_max: int | None = None, beta: float = 0.0):
    """
    Yield :class:`SzegoState` for ``n = 0, ..., n_max``.

    The first kind evolves ``(phi, phi*)`` under the coefficients
    ``exp(i beta) alpha_n``; the second kind evolves the column
    ``(psi, -psi*)`` under the same matrices. ``T`` accumulates the ordered
    product of one-step matrices.
    """
    if n_max is None:
        n_max = seq.n_max
    if n_max > seq.n_max:
        raise ValueError("n_max exceeds the sequence length")
    rseq = rotate(seq, beta) if beta else seq
    alphas = rseq.values
    mods = rseq.moduli
    zz = _as_point(z).z

    phi = phi_s = psi = psi_s = 1 + 0j
    T = Matrix2.identity()
    monic = 1.0
    k = 0
    sup_log, argmax = 0.0, 0
    yield SzegoState(0, phi, phi_s, psi, psi_s, T, monic, 0, 0.0, 0.0, 0)
    for n in range(n_max):
        a = complex(alphas[n])
        m = float(mods[n])
        rho = math.sqrt((1.0 - m) * (1.0 + m))
        ac = a.conjugate()
        zp = zz * phi
        phi, phi_s = (zp - ac * phi_s) / rho, (phi_s - a * zp) / rho
        zq = zz * psi
        # second column is (psi, -psi*)
        psi, npsi_s = (zq + ac * psi_s) / rho, (-psi_s - a * zq) / rho
        psi_s = -npsi_s
        step = Matrix2(zz / rho, -ac / rho, -a * zz / rho, 1.0 / rho)
        T = step @ T
        monic *= rho
        if abs(T.a) + abs(T.b) + abs(T.c) + abs(T.d) > RESCALE_AT:
            f = math.ldexp(1.0, -RESCALE_EXP)
            T = T.scaled(f)
            phi, phi_s, psi, psi_s = phi * f, phi_s * f, psi * f, psi_s * f
            k += RESCALE_EXP
        log_norm = math.log(T.norm()) + k * _LOG2
        if not math.isfinite(log_norm):
            raise FloatingPointError(f"non-finite norm at step {n + 1}")
        if log_norm > sup_log:
            sup_log, argmax = log_norm, n + 1
        yield SzegoState(n + 1, phi, phi_s, psi, psi_s, T, monic, k, log_norm, sup_log, argmax)


def final_state(seq: VerblunskySequence, z, n: int, beta: float = 0.0) -> SzegoState:
    """Run :func:`evolve` to step ``n`` and return that state."""
    state = None
    for state in evolve(seq, z, n, beta):
        pass
    return state


def second_kind_equivalence(seq: VerblunskySequence, z, n: int) -> float:
    """
    Relative gap between the second-kind ``psi_n`` and the first-kind
    ``phi_n`` of the sequence rotated by ``pi``.
    """
    if n > seq.n_max:
        raise ValueError("n exceeds the sequence length")
    direct = final_state(seq, z, n)
    flipped = final_state(rotate(seq, math.pi), z, n)
    psi = direct.psi * direct.scale
    phi = flipped.phi * flipped.scale
    denom = max(abs(psi), abs(phi))
    if denom == 0.0:
        return 0.0
    return abs(psi - phi) / denom


@numba.njit(cache=True)
def _sup_one(alpha, inv_rho, eta, n_steps):
    z = complex(math.cos(eta), math.sin(eta))
    # columns (phi, phi*) and (psi, -psi*)
    p1 = 1.0 + 0.0j
    q1 = 1.0 + 0.0j
    p2 = 1.0 + 0.0j
    q2 = -1.0 + 0.0j
    best = 1.0
    best_n = 0
    # |det T_n| = 1, so sigma_max > best iff ||T||_F^2 > best^2 + best^-2;
    # the exact norm is only evaluated when the Frobenius test passes
    gate = 2.0 * GATE_SLACK
    log_shift = 0.0
    shrink = 2.0 ** (-RESCALE_EXP)
    for n in range(n_steps):
        a = alpha[n]
        ac = a.conjugate()
        ir = inv_rho[n]
        zp1 = z * p1
        zp2 = z * p2
        p1, q1 = (zp1 - ac * q1) * ir, (q1 - a * zp1) * ir
        p2, q2 = (zp2 - ac * q2) * ir, (q2 - a * zp2) * ir
        # ||T||_F^2 = ||P||_F^2 / 2
        f2 = 0.5 * (
            p1.real * p1.real + p1.imag * p1.imag + q1.real * q1.real + q1.imag * q1.imag
            + p2.real * p2.real + p2.imag * p2.imag + q2.real * q2.real + q2.imag * q2.imag
        )
        if not f2 >= gate:
            if math.isfinite(f2):
                continue
            return np.nan, n + 1, True
        t11 = 0.5 * (p1 + p2)
        t12 = 0.5 * (p1 - p2)
        t21 = 0.5 * (q1 + q2)
        t22 = 0.5 * (q1 - q2)
        s = _opnorm2_jit(t11, t12, t21, t22)
        if not math.isfinite(s):
            return np.nan, n + 1, True
        if s > best:
            best = s
            best_n = n + 1
            gate = (best * best + 1.0 / (best * best)) * GATE_SLACK
        if s > RESCALE_AT:
            # best is rescaled with the state so comparisons stay in one unit
            p1 *= shrink
            q1 *= shrink
            p2 *= shrink
            q2 *= shrink
            best *= shrink
            gate = 0.0
            log_shift += RESCALE_EXP * math.log(2.0)
    return math.log(best) + log_shift, best_n, False


@numba.njit(cache=True)
def _sup_kernel(alpha, inv_rho, etas, n_steps, out_sup, out_arg, out_fail):
    for i in range(etas.size):
        s, k, f = _sup_one(alpha, inv_rho, etas[i], n_steps)
        out_sup[i] = s
        out_arg[i] = k
        out_fail[i] = f


def sup_log_norms(seq: VerblunskySequence, etas, n_steps: int, beta: float = 0.0):
    """
    ``max_{0<=n<=n_steps} log ||T_n(exp(i eta))||`` for every ``eta``.

    Returns ``(sup, argmax_n, failed)`` arrays. Each angle is an independent
    sequential evolution, so the result for a given angle never depends on
    how the grid is split between workers.
    """
    if n_steps > seq.n_max:
        raise ValueError("n_steps exceeds the sequence length")
    rseq = rotate(seq, beta) if beta else seq
    alpha = np.ascontiguousarray(rseq.values[:n_steps])
    m = rseq.moduli[:n_steps]
    inv_rho = 1.0 / np.sqrt((1.0 - m) * (1.0 + m))
    etas = np.ascontiguousarray(etas, dtype=np.float64)
    out_sup = np.empty(etas.size)
    out_arg = np.empty(etas.size, dtype=np.int64)
    out_fail = np.empty(etas.size, dtype=np.bool_)
    _sup_kernel(alpha, inv_rho, etas, int(n_steps), out_sup, out_arg, out_fail)
    return out_sup, out_arg, out_fail


def write_trajectory(seq: VerblunskySequence, eta: float, n_max: int, beta: float, path) -> Path:
    """CSV with columns ``n, re_phi, im_phi, re_psi, im_psi, logT``."""
    path = Path(path)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "re_phi", "im_phi", "re_psi", "im_psi", "logT"])
        for st in evolve(seq, CirclePoint(eta), n_max, beta):
            phi = st.phi * st.scale
            psi = st.psi * st.scale
            w.writerow([st.n, repr(phi.real), repr(phi.imag), repr(psi.real), repr(psi.imag), repr(st.log_norm)])
    return path
