"""
Resonances and transmission of a finite interface structure in vacuum.

The left crystal fills ``[N1, 0]``, the right one ``[0, N2]`` and vacuum
surrounds both.  A resonance is a complex frequency at which a solution is
outgoing on both sides: ``psi ~ e^{-i omega x}`` for ``x < N1`` and
``psi ~ e^{i omega x}`` for ``x > N2``.  With the time convention implied by
these waves resonances lie strictly below the real axis.
"""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import find_peaks, peak_widths

from .errors import InputError, NoConvergence, NumericalError
from .medium import FiniteStructure
from .propagator import complex_monodromy, floquet_eigen, monodromy

logger = logging.getLogger(__name__)

__all__ = [
    "Resonance",
    "ScatteringResult",
    "DecayFit",
    "resonance_residual",
    "factored_residual",
    "find_resonance_near",
    "resonance_family",
    "transmission",
    "transmission_sweep",
    "TransmissionPeak",
    "transmission_peak",
    "decay_fit",
]


@dataclass(frozen=True)
class Resonance:
    omega: complex
    N1: int
    N2: int
    residual: float
    nearest_interface_omega: float = math.nan
    iterations: int = 0
    method: str = "newton"

    @property
    def offset(self) -> complex:
        """``omega - omega_inf``."""
        return self.omega - self.nearest_interface_omega


@dataclass(frozen=True)
class ScatteringResult:
    omega: float
    t: complex
    r: complex

    @property
    def flux_defect(self) -> float:
        return abs(abs(self.t) ** 2 + abs(self.r) ** 2 - 1.0)


@dataclass(frozen=True)
class DecayFit:
    """Least-squares fit ``log|omega_N - omega_inf| = log C - alpha N``."""

    alpha: float
    C: float
    r_squared: float
    N: tuple
    distance: tuple


def _inv(M):
    # det M = 1
    return np.array([[M[1, 1], -M[0, 1]], [-M[1, 0], M[0, 0]]])


def _residual_parts(fs: FiniteStructure, omega: complex):
    # Shooting through the whole structure in one direction amplifies rounding
    # along the growing direction of the second crystal.  Both solutions are
    # carried towards the junction instead: the outgoing one from N1 and the
    # one from N2 backwards.  det[M v, w] = det[v, M^-1 w] makes the result
    # equal to the one-sided residual.
    omega = complex(omega)
    ML = complex_monodromy(fs.left, omega)
    MR = complex_monodromy(fs.right, omega)
    vl = np.linalg.matrix_power(ML, -fs.n1) @ np.array([1.0, -1j * omega])
    vr = np.linalg.matrix_power(_inv(MR), fs.n2) @ np.array([1.0, 1j * omega])
    f = vl[1] * vr[0] - vl[0] * vr[1]
    scale = (abs(vl[0]) + abs(vl[1])) * (abs(vr[0]) + abs(vr[1]))
    return f, scale


def resonance_residual(fs: FiniteStructure, omega: complex) -> complex:
    """Outgoing-condition mismatch at ``N2`` for a solution outgoing at ``N1``.

    Starts from ``(psi, psi'/mu) = (1, -i omega)`` at ``N1`` and returns
    ``flux(N2) - i omega psi(N2)``.  Zeros are exactly the resonances.
    """
    if omega == 0:
        raise InputError("omega must be non-zero")
    return _residual_parts(fs, omega)[0]


def _relative(fs, omega):
    f, scale = _residual_parts(fs, omega)
    return abs(f) / scale if scale > 0 else math.inf


def factored_residual(fs: FiniteStructure, omega: complex) -> complex:
    """The same condition assembled from Floquet decompositions.

    The start vector is expanded in the eigenbasis of the left crystal and
    the state at ``0`` in that of the right crystal, with coefficients
    ``c1 = det[X, V2] / det[V1, V2]`` and ``c2 = det[V1, X] / det[V1, V2]``;
    powers of the multipliers replace the matrix powers.  Used only to
    validate :func:`resonance_residual`.  Returns the mismatch divided by
    the size of the terms that make it up.
    """
    omega = complex(omega)
    det = lambda a, b: a[0] * b[1] - a[1] * b[0]

    def advance(M, X, n):
        fd = floquet_eigen(M)
        V1, V2 = fd.vecs[:, 0], fd.vecs[:, 1]
        w = det(V1, V2)
        c1 = det(X, V2) / w
        c2 = det(V1, X) / w
        return c1 * fd.lam[0] ** n * V1, c2 * fd.lam[1] ** n * V2

    X = np.array([1.0, -1j * omega])
    a, b = advance(complex_monodromy(fs.left, omega), X, -fs.n1)
    a2, b2 = advance(complex_monodromy(fs.right, omega), a + b, fs.n2)
    g = lambda V: V[1] - 1j * omega * V[0]
    terms = [g(a2), g(b2)]
    return complex(sum(terms) / max(abs(t) for t in terms))


def _derivative(fs, w, f0=None):
    h = 1e-6 * (1.0 + abs(w))
    dr = (resonance_residual(fs, w + h) - resonance_residual(fs, w - h)) / (2 * h)
    di = (resonance_residual(fs, w + 1j * h) - resonance_residual(fs, w - 1j * h)) / (2j * h)
    return 0.5 * (dr + di)


def _newton(fs, w, radius, w0, maxit=60):
    for it in range(1, maxit + 1):
        f = resonance_residual(fs, w)
        d = _derivative(fs, w)
        if d == 0 or not np.isfinite(d):
            return None, it
        step = f / d
        # damp steps that would leave the search disc
        if abs(step) > 0.5 * radius:
            step *= 0.5 * radius / abs(step)
        w = w - step
        if abs(w - w0) > radius:
            return None, it
        if abs(step) < 1e-14 * (1.0 + abs(w)):
            return w, it
    return (w if _relative(fs, w) < 1e-9 else None), maxit


def _muller(fs, w0, radius, maxit=100):
    h = 0.1 * radius
    x = [w0 - h, w0 + h, w0 - 1j * h]
    fx = [resonance_residual(fs, z) for z in x]
    for it in range(1, maxit + 1):
        x0, x1, x2 = x
        f0, f1, f2 = fx
        q = (x2 - x1) / (x1 - x0)
        A = q * f2 - q * (1 + q) * f1 + q * q * f0
        B = (2 * q + 1) * f2 - (1 + q) ** 2 * f1 + q * q * f0
        C = (1 + q) * f2
        disc = cmath.sqrt(B * B - 4 * A * C)
        den = B + disc if abs(B + disc) >= abs(B - disc) else B - disc
        if den == 0:
            return None, it
        xn = x2 - (x2 - x1) * 2 * C / den
        if abs(xn - w0) > radius:
            return None, it
        x = [x1, x2, xn]
        fx = [f1, f2, resonance_residual(fs, xn)]
        if abs(xn - x2) < 1e-14 * (1.0 + abs(xn)):
            return xn, it
    return None, maxit


def find_resonance_near(fs: FiniteStructure, omega0: complex, radius: float = 0.5,
                        omega_inf: float = math.nan) -> Resonance:
    """Resonance of ``fs`` within ``radius`` of ``omega0``.

    Newton iteration with a derivative from central differences along both
    axes (averaged, since the residual is analytic); Muller's method on a
    small triangle around ``omega0`` if Newton leaves the disc or stalls.

    Raises
    ------
    NoConvergence
        If neither method finds a root with relative residual below ``1e-9``
        inside the disc.
    NumericalError
        If the root is not simple or not in the lower half plane.
    """
    omega0 = complex(omega0)
    if omega0.imag > 0:
        raise InputError("seed must lie in the closed lower half plane")
    w, it = _newton(fs, omega0, radius, omega0)
    method = "newton"
    if w is None:
        logger.debug("Newton failed from %s; trying Muller", omega0)
        w, it = _muller(fs, omega0, radius)
        method = "muller"
    if w is None:
        raise NoConvergence(f"no resonance within {radius} of {omega0} for N1={fs.n1}, N2={fs.n2}")
    rel = _relative(fs, w)
    if rel >= 1e-9:
        raise NoConvergence(f"resonance candidate {w} has relative residual {rel:.2e}")
    if not w.imag < 0:
        raise NumericalError(f"resonance {w} is not below the real axis")
    # simple root: derivative not small compared with the residual scale
    _, scale = _residual_parts(fs, w)
    d = _derivative(fs, w)
    if abs(d) * max(1.0, abs(w.imag)) < 1e-8 * scale:
        raise NumericalError(f"resonance {w} appears to be multiple (|f'| = {abs(d):.2e})")
    return Resonance(w, fs.n1, fs.n2, rel, float(omega_inf), it, method)


def resonance_family(left, right, sizes: Sequence[int], omega_inf: float, radius: float = 0.5,
                     executor=None) -> list:
    """Resonances nearest to ``omega_inf`` for ``N1 = -N``, ``N2 = N``.

    Each size is seeded at ``omega_inf``; on failure the seed is moved
    slightly below the axis.
    """

    def one(N):
        fs = FiniteStructure(left, right, -int(N), int(N))
        try:
            return find_resonance_near(fs, complex(omega_inf), radius, omega_inf)
        except NoConvergence:
            return find_resonance_near(fs, complex(omega_inf, -0.01), radius, omega_inf)

    if executor is None:
        return [one(N) for N in sizes]
    return list(executor.map(one, sizes))


# --------------------------------------------------------------------------
# scattering


def transmission(fs: FiniteStructure, omega: float) -> ScatteringResult:
    """Transmission and reflection for a wave ``e^{i omega x}`` incident from the left.

    Left of ``N1`` the field is ``e^{i omega x} + r e^{-i omega x}``, right of
    ``N2`` it is ``t e^{i omega x}``; both use the global coordinate ``x``.
    """
    omega = float(omega)
    if not omega > 0:
        raise InputError("omega must be positive")
    E = omega * omega
    M = np.linalg.matrix_power(monodromy(fs.right, E), fs.n2) @ np.linalg.matrix_power(monodromy(fs.left, E), -fs.n1)
    e1 = cmath.exp(1j * omega * fs.n1)
    e2 = cmath.exp(1j * omega * fs.n2)
    a = e1 * np.array([1.0, 1j * omega])
    b = np.array([1.0, -1j * omega]) / e1
    c = e2 * np.array([1.0, 1j * omega])
    A = np.column_stack((M @ b, -c))
    if abs(np.linalg.det(A)) < 1e-300:
        raise NumericalError(f"singular scattering system at omega={omega}")
    r, t = np.linalg.solve(A, -(M @ a))
    return ScatteringResult(omega, complex(t), complex(r))


def transmission_sweep(fs: FiniteStructure, omegas) -> list:
    return [transmission(fs, w) for w in np.asarray(omegas, dtype=float)]


@dataclass(frozen=True)
class TransmissionPeak:
    omega: float
    abs_t: float
    half_width: float


def transmission_peak(fs: FiniteStructure, center: float, span: float, n: int = 4001) -> TransmissionPeak:
    """Local maximum of ``|t|`` nearest ``center`` and its half-width.

    The half-width is half the width of the peak at half its prominence
    (measured on ``|t|`` relative to the neighbouring minima), which stays
    finite for the broad, shallow peaks of short structures.
    """
    w = np.linspace(center - span, center + span, n)
    at = np.array([abs(transmission(fs, x).t) for x in w])
    idx, _ = find_peaks(at)
    if not idx.size:
        raise NumericalError(f"|t| has no local maximum in [{w[0]:.6g}, {w[-1]:.6g}]")
    i = int(idx[np.argmin(np.abs(w[idx] - center))])
    widths = peak_widths(at, [i], rel_height=0.5)[0]
    dw = w[1] - w[0]
    # refine the maximum with a parabola through three samples
    y0, y1, y2 = at[i - 1], at[i], at[i + 1]
    den = y0 - 2 * y1 + y2
    off = 0.5 * (y0 - y2) / den if den != 0 else 0.0
    return TransmissionPeak(float(w[i] + off * dw), float(y1), float(0.5 * widths[0] * dw))


def decay_fit(family, omega_inf: float) -> DecayFit:
    """Fit ``|omega_N - omega_inf| ~ C exp(-alpha N)`` with ``N = min(|N1|, N2)``.

    Parameters
    ----------
    family : sequence of Resonance or FiniteStructure
        Structures are solved with :func:`find_resonance_near` seeded at
        ``omega_inf``.
    omega_inf : float

    Raises
    ------
    InputError
        Fewer than three sizes, or repeated sizes.
    """
    res = []
    for item in family:
        if isinstance(item, Resonance):
            res.append(item)
        elif isinstance(item, FiniteStructure):
            try:
                res.append(find_resonance_near(item, complex(omega_inf), 0.5, omega_inf))
            except NoConvergence:
                res.append(find_resonance_near(item, complex(omega_inf, -0.01), 0.5, omega_inf))
        else:
            raise InputError(f"cannot fit {type(item).__name__}")
    N = np.array([min(-r.N1, r.N2) for r in res], dtype=float)
    if len(N) < 3:
        raise InputError("need at least three sizes")
    if len(set(N.tolist())) != len(N):
        raise InputError("sizes must be distinct")
    d = np.array([abs(r.omega - omega_inf) for r in res])
    y = np.log(d)
    slope, icpt = np.polyfit(N, y, 1)
    pred = icpt + slope * N
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return DecayFit(float(-slope), float(math.exp(icpt)), r2, tuple(N.astype(int).tolist()), tuple(d.tolist()))
