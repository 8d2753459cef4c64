"""
Interface modes between two semi-infinite crystals, with or without a defect.

For energies in a gap the monodromy of each crystal has a decaying
direction.  With ``lam[0]`` the multiplier of modulus below one,

    xi_R(E) = M01 / (lam_1 - M00)     (decays to the right)
    xi_L(E) = M01 / (lam_2 - M00)     (decays to the left)

are the impedances of the two decaying solutions.  A mode supported at the
junction of crystal 1 (left) and crystal 2 (right) exists at ``E`` exactly
when ``xi_L^(1)(E) = xi_R^(2)(E)``.  With a defect slab between them the
condition becomes collinearity of ``M_d V_2^(1)`` and ``V_1^(2)``.

Prufer variables ``Psi = rho (sin theta, cos theta)`` track the rotation of
the state vector; they are used for the stability bound and to build a
two-layer defect that removes the interface mode.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import InputError, NumericalError, PreconditionError
from .medium import DefectSpec, MediumProfile, Piece, is_inversion_symmetric
from .propagator import (
    defect_transfer,
    floquet_eigen,
    fundamental_solution,
    gauss_nodes,
    monodromy,
)
from .spectrum import Gap, band_edges, band_structure

logger = logging.getLogger(__name__)

__all__ = [
    "impedance",
    "ImpedanceCurve",
    "impedance_curve",
    "CommonGap",
    "common_gap",
    "InterfaceMode",
    "find_interface_modes",
    "mode_profile",
    "PruferState",
    "prufer_evolve",
    "stability_bound",
    "stability_value",
    "defect_mode_search",
    "Counterexample",
    "build_counterexample",
    "counterexample_report",
]

_XTOL = 1e-13
_POLE_CAP = 1e6


def _gap_floquet(p: MediumProfile, E: float):
    fd = floquet_eigen(monodromy(p, E))
    if abs(fd.D) <= 2:
        raise PreconditionError(f"E={E:.10g} lies in a band of {p!r} (|D| = {abs(fd.D):.6f} <= 2)")
    return fd


def _xi_pair(p: MediumProfile, E: float):
    """``(xi_L, xi_R)`` without raising at poles (``inf`` there)."""
    M = monodromy(p, E)
    D = M[0, 0] + M[1, 1]
    if abs(D) <= 2:
        return np.nan, np.nan
    big = (D + math.copysign(math.sqrt(D * D - 4), D)) / 2
    lam1, lam2 = 1 / big, big
    d1 = lam1 - M[0, 0]
    d2 = lam2 - M[0, 0]
    xr = M[0, 1] / d1 if d1 != 0 else np.inf
    xl = M[0, 1] / d2 if d2 != 0 else np.inf
    return xl, xr


def _side(side: str) -> str:
    s = str(side).lower()
    if s in ("r", "right"):
        return "R"
    if s in ("l", "left"):
        return "L"
    raise InputError(f"side must be 'left' or 'right', got {side!r}")


def impedance(p: MediumProfile, side: str, E: float) -> float:
    """Impedance of the decaying solution on one side.

    Parameters
    ----------
    p : MediumProfile
    side : {"right", "left"}
        ``"right"`` (or ``"R"``) for the solution decaying as ``x -> +inf``,
        ``"left"`` for the one decaying as ``x -> -inf``.
    E : float
        Energy inside a gap of ``p``.

    Raises
    ------
    PreconditionError
        If ``E`` is not in a gap.
    NumericalError
        If the denominator vanishes (a pole of the impedance).
    """
    side = _side(side)
    fd = _gap_floquet(p, float(E))
    lam = fd.lam[0] if side == "R" else fd.lam[1]
    den = lam - fd.M[0, 0]
    if abs(den) < 1e-12 * max(1.0, float(np.max(np.abs(fd.M)))):
        kind = "Dirichlet" if side == "R" else "Neumann"
        raise NumericalError(
            f"impedance pole at E={E:.12g}: the decaying solution has zero psi at the cell ends "
            f"(a {kind}-type half-line eigenvalue); the impedance is not defined there"
        )
    return float(fd.M[0, 1] / den)


@dataclass(frozen=True)
class ImpedanceCurve:
    """Samples of one impedance across an energy interval.

    ``poles`` holds the energies where the sampled curve jumps through
    infinity (sign change with a large flank).
    """

    side: str
    E: np.ndarray
    xi: np.ndarray
    poles: tuple


def impedance_curve(p: MediumProfile, side: str, interval, n: int = 400) -> ImpedanceCurve:
    """Sample ``impedance(p, side, E)`` on ``n`` points strictly inside ``interval``."""
    side = _side(side)
    lo, hi = float(interval[0]), float(interval[1])
    pad = 1e-9 * (hi - lo)
    E = np.linspace(lo + pad, hi - pad, n)
    xi = np.array([_xi_pair(p, e)[0 if side == "L" else 1] for e in E])
    poles = []
    for i in range(n - 1):
        a, b = xi[i], xi[i + 1]
        if np.isfinite(a) and np.isfinite(b) and np.sign(a) != np.sign(b) and max(abs(a), abs(b)) > 1.0:
            poles.append(0.5 * (E[i] + E[i + 1]))
        elif not (np.isfinite(a) and np.isfinite(b)):
            poles.append(float(E[i]))
    return ImpedanceCurve(side, E, xi, tuple(poles))


@dataclass(frozen=True)
class CommonGap:
    """Overlap of gap ``m1`` of the left crystal and gap ``m2`` of the right one."""

    lo: float
    hi: float
    m1: int
    m2: int

    @property
    def interval(self):
        return (self.lo, self.hi)

    def contains(self, E):
        return self.lo < E < self.hi


def common_gap(p1: MediumProfile, p2: MediumProfile, e_max: float | None = None) -> list:
    """All non-empty overlaps of a gap of ``p1`` with a gap of ``p2`` below ``e_max``.

    An empty list means the two crystals share no gap in the window.
    """
    b1, b2 = _edges_pair(p1, p2, e_max)
    out = []
    for g1 in b1.gaps:
        for g2 in b2.gaps:
            lo = max(g1.lower.E, g2.lower.E)
            hi = min(g1.upper.E, g2.upper.E)
            if hi > lo:
                out.append(CommonGap(lo, hi, g1.index, g2.index))
    out.sort(key=lambda c: c.lo)
    return out


def _edges_pair(p1, p2, e_max):
    if e_max is None:
        b1 = band_structure(p1, 8)
        b2 = band_structure(p2, 8)
        e = min(b1.e_max, b2.e_max)
        return band_edges(p1, e), band_edges(p2, e)
    return band_edges(p1, e_max), band_edges(p2, e_max)


# --------------------------------------------------------------------------
# modes


@dataclass(frozen=True, eq=False)
class InterfaceMode:
    """A localised solution at the junction of two crystals.

    ``U`` is the unit state vector ``(psi, psi'/mu)`` at ``x = d1`` (the
    right end of the left crystal); the right crystal starts at ``d2``
    (``d1 = d2 = 0`` without defect).
    """

    E: float
    left: MediumProfile
    right: MediumProfile
    defect: DefectSpec
    U: np.ndarray
    lam_left: float   # growing multiplier of the left crystal (decay to the left)
    lam_right: float  # decaying multiplier of the right crystal
    collinearity: float
    gap: CommonGap | None = None
    residual: float = field(default=np.nan)

    @property
    def omega(self) -> float:
        return float(np.sqrt(self.E))

    @property
    def decay_right(self) -> float:
        """Amplitude ratio over one period to the right."""
        return abs(self.lam_right)

    @property
    def decay_left(self) -> float:
        return 1.0 / abs(self.lam_left)

    def profile(self, n_periods: int = 6, per_period: int = 64):
        return mode_profile(self, n_periods=n_periods, per_period=per_period)


def _sample_mode(mode: InterfaceMode, x):
    """State vectors of ``mode`` at positions ``x`` (sorted or not)."""
    x = np.asarray(x, dtype=float)
    d1, d2 = mode.defect.d1, mode.defect.d2
    out = np.empty(x.shape + (2,))
    L = x <= d1
    R = x >= d2
    C = ~(L | R)
    if np.any(L):
        Psi = fundamental_solution(mode.left, mode.E, x[L] - d1)
        out[L] = Psi @ mode.U
    Ud2 = defect_transfer(mode.defect, mode.E) @ mode.U
    if np.any(R):
        Psi = fundamental_solution(mode.right, mode.E, x[R] - d2)
        out[R] = Psi @ Ud2
    if np.any(C):
        out[C] = _defect_states(mode.defect, mode.E, x[C]) @ mode.U
    return out


def _defect_states(defect: DefectSpec, E: float, x):
    """Transfer matrices from ``d1`` to points ``x`` inside the defect."""
    from .propagator import _layer_jet, _piece_jet, _sampled_jet

    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (2, 2))
    bp = defect.d1 + defect.breakpoints
    left = np.eye(2)
    for i, pc in enumerate(defect.pieces):
        sel = (x >= bp[i]) & (x <= bp[i + 1])
        if np.any(sel):
            s = x[sel] - bp[i]
            if pc.is_constant:
                T = _layer_jet(pc.eps, pc.mu, s, E)[0]
            else:
                T = _sampled_jet(pc, E, 0, s_eval=s)
            out[sel] = T @ left
        left = _piece_jet(pc, E)[0] @ left
    return out


def mode_profile(p1, p2=None, E=None, n_periods: int = 6, per_period: int = 64, defect: DefectSpec | None = None):
    """Sample ``psi`` and ``psi'/mu`` over ``n_periods`` cells on each side.

    Accepts either an :class:`InterfaceMode` or ``(p1, p2, E)``.

    Returns
    -------
    x, psi, flux : ndarray

    Raises
    ------
    NumericalError
        If the two decaying directions at ``E`` are not collinear (``E`` is
        not a mode).
    """
    if isinstance(p1, InterfaceMode):
        mode = p1
        if p2 is not None:
            n_periods = int(p2)
    else:
        mode = _make_mode(p1, p2, defect or DefectSpec(0.0, 0.0), float(E), residual=False)
    if mode.collinearity > 1e-8:
        raise NumericalError(f"E={mode.E:.12g} is not an interface mode (mismatch {mode.collinearity:.2e})")
    d1, d2 = mode.defect.d1, mode.defect.d2
    xl = np.linspace(d1 - n_periods, d1, n_periods * per_period + 1)
    xr = np.linspace(d2, d2 + n_periods, n_periods * per_period + 1)
    xd = np.linspace(d1, d2, max(2, int(np.ceil((d2 - d1) * per_period)) + 1))[1:-1] if d2 > d1 else np.array([])
    x = np.concatenate((xl, xd, xr))
    if d2 == d1:
        x = np.concatenate((xl, xr[1:]))
    st = _sample_mode(mode, x)
    return x, st[:, 0], st[:, 1]


def _integral_residual(mode: InterfaceMode, n_periods: int = 3) -> float:
    """Residual of the equation in integral form over cells near the junction.

    On every piece ``[a, b]`` checks ``psi(b) - psi(a) = int mu flux`` and
    ``flux(b) - flux(a) = -E int eps psi`` with Gauss quadrature on
    independently sampled states; returns the largest violation relative
    to the local state size.
    """
    E = mode.E
    segs = []
    d1, d2 = mode.defect.d1, mode.defect.d2
    for n in range(1, n_periods + 1):
        base = d1 - n
        bp = mode.left.breakpoints
        for i, pc in enumerate(mode.left.pieces):
            segs.append((base + bp[i], base + bp[i + 1], pc))
        base = d2 + n - 1
        bp = mode.right.breakpoints
        for i, pc in enumerate(mode.right.pieces):
            segs.append((base + bp[i], base + bp[i + 1], pc))
    bp = d1 + mode.defect.breakpoints
    for i, pc in enumerate(mode.defect.pieces):
        segs.append((bp[i], bp[i + 1], pc))
    worst = 0.0
    for a, b, pc in segs:
        k = np.sqrt(abs(E) * np.max(pc.eps_at(np.array([0.0, pc.width]))) * np.max(pc.mu_at(np.array([0.0, pc.width]))))
        nq = int(min(200, 16 + 2 * np.ceil(k * (b - a))))
        xq, wq = gauss_nodes(a, b, nq)
        ends = _sample_mode(mode, np.array([a, b]))
        st = _sample_mode(mode, xq)
        eps = pc.eps_at(xq - a)
        mu = pc.mu_at(xq - a)
        r1 = ends[1, 0] - ends[0, 0] - np.sum(wq * mu * st[:, 1])
        r2 = ends[1, 1] - ends[0, 1] + E * np.sum(wq * eps * st[:, 0])
        scale = np.max(np.abs(st)) * (1.0 + abs(E) * (b - a))
        worst = max(worst, abs(r1) / scale, abs(r2) / scale)
    return float(worst)


def _make_mode(p1, p2, defect, E, gap=None, residual=True) -> InterfaceMode:
    f1 = _gap_floquet(p1, E)
    f2 = _gap_floquet(p2, E)
    V2 = f1.unit_vecs()[:, 1].real
    V1 = f2.unit_vecs()[:, 0].real
    W = defect_transfer(defect, E) @ V2
    col = abs(W[0] * V1[1] - W[1] * V1[0]) / np.linalg.norm(W)
    mode = InterfaceMode(
        E=float(E), left=p1, right=p2, defect=defect, U=V2,
        lam_left=float(np.real(f1.lam[1])), lam_right=float(np.real(f2.lam[0])),
        collinearity=float(col), gap=gap,
    )
    if residual:
        object.__setattr__(mode, "residual", _integral_residual(mode))
    return mode


def _xi_diff(p1, p2):
    def f(E):
        xl, _ = _xi_pair(p1, E)
        _, xr = _xi_pair(p2, E)
        return xl - xr
    return f


def _scan_roots(f, lo, hi, n_scan, refine=4):
    """Sign changes of ``f`` on ``(lo, hi)`` refined by brentq.

    Returns roots together with the ends of the refined bracket.
    """
    pad = 1e-9 * (hi - lo)
    grid = np.linspace(lo + pad, hi - pad, n_scan)
    vals = np.array([f(E) for E in grid])
    out = []
    for i in range(n_scan - 1):
        a, b, fa, fb = grid[i], grid[i + 1], vals[i], vals[i + 1]
        if not (np.isfinite(fa) and np.isfinite(fb)) or np.sign(fa) == np.sign(fb):
            continue
        # refine the bracket so that a root next to a pole is separated from it
        sub = np.linspace(a, b, refine + 1)
        sv = np.array([f(E) for E in sub])
        for j in range(refine):
            if np.isfinite(sv[j]) and np.isfinite(sv[j + 1]) and np.sign(sv[j]) != np.sign(sv[j + 1]):
                if sv[j] == 0.0:
                    out.append((sub[j], sub[j], sub[j]))
                    continue
                try:
                    r = brentq(f, sub[j], sub[j + 1], xtol=_XTOL, rtol=4 * np.finfo(float).eps, maxiter=300)
                except ValueError:
                    # inf - inf at a common pole; the caller refines the bracket itself
                    r = 0.5 * (sub[j] + sub[j + 1])
                out.append((r, sub[j], sub[j + 1]))
    return out, grid, vals


def _bulk_gammas(p1, p2, cg: CommonGap):
    if not (is_inversion_symmetric(p1) and is_inversion_symmetric(p2)):
        return None
    from .bloch import bulk_index

    try:
        return bulk_index(p1, cg.m1).gamma, bulk_index(p2, cg.m2).gamma
    except PreconditionError:
        return None


def find_interface_modes(p1: MediumProfile, p2: MediumProfile, e_max: float | None = None,
                         gap: CommonGap | tuple | None = None, n_scan: int = 400) -> list:
    """Interface modes between ``p1`` (on ``x < 0``) and ``p2`` (on ``x > 0``).

    Roots of ``xi_L^(1) - xi_R^(2)`` are searched in every common gap below
    ``e_max`` (or only in ``gap``).  Every sign change is refined and then
    confirmed by a sign change of the oriented determinant of the two unit
    decaying eigenvectors; this discards poles of a single impedance while
    keeping modes at which both impedances are infinite (``psi' = 0`` at
    the junction).  When both cells are inversion-symmetric and their bulk
    indices differ for a gap, at least one mode must be found there.

    Returns
    -------
    list of InterfaceMode
        Sorted by energy.

    Raises
    ------
    NumericalError
        If a mode guaranteed by differing bulk indices is not found.
    """
    if gap is not None:
        gaps = [gap if isinstance(gap, CommonGap) else CommonGap(float(gap[0]), float(gap[1]), 0, 0)]
    else:
        gaps = common_gap(p1, p2, e_max)
    f = _xi_diff(p1, p2)
    empty = DefectSpec(0.0, 0.0)
    h = _defect_h(p1, p2, empty)
    modes = []
    for cg in gaps:
        found = []
        roots, _, _ = _scan_roots(f, cg.lo, cg.hi, n_scan)
        for r, a, b in roots:
            # A sign change of xi_L - xi_R through infinity is normally a pole
            # of one impedance, but when both impedances blow up together the
            # two decaying directions are both (1, 0) and the point is a mode.
            # The oriented determinant of the unit eigenvectors has no poles,
            # so the final root is taken from it on the refined bracket.
            flank = max(abs(v) for E in (a, b) for v in (_xi_pair(p1, E)[0], _xi_pair(p2, E)[1]))
            hits = _h_roots(h, a, b, 8) if b > a else [r]
            if not hits:
                kind = "pole" if not flank < _POLE_CAP else "root"
                logger.debug("rejected %s at E=%.12g: no sign change of the eigenvector determinant", kind, r)
                continue
            E = min(hits, key=lambda x: abs(x - r))
            mode = _make_mode(p1, p2, empty, E, cg, residual=False)
            if mode.collinearity > 1e-8:
                logger.debug("rejected root at E=%.12g: collinearity %.2e", E, mode.collinearity)
                continue
            object.__setattr__(mode, "residual", _integral_residual(mode))
            found.append(mode)
        if not found and gap is None and cg.m1 and cg.m2:
            gam = _bulk_gammas(p1, p2, cg)
            if gam is not None and gam[0] != gam[1]:
                raise NumericalError(
                    f"bulk indices differ ({gam[0]:+d} vs {gam[1]:+d}) on ({cg.lo:.8g}, {cg.hi:.8g}) but no mode was found"
                )
        modes.extend(found)
    modes.sort(key=lambda m: m.E)
    return modes


# --------------------------------------------------------------------------
# Prufer variables


@dataclass(frozen=True)
class PruferState:
    """Prufer angle ``theta`` and ``log rho`` with ``Psi = rho (sin theta, cos theta)``."""

    x: float
    theta: float
    log_rho: float

    @property
    def theta_tilde(self) -> float:
        """Polar angle of ``Psi`` measured from the ``psi`` axis, ``pi/2 - theta``."""
        return 0.5 * np.pi - self.theta

    @property
    def vector(self) -> np.ndarray:
        r = math.exp(self.log_rho)
        return np.array([r * math.sin(self.theta), r * math.cos(self.theta)])


def _segments(medium, x0: float, x1: float):
    """Pieces of ``medium`` covering ``[x0, x1]`` as ``(a, b, piece, offset)``."""
    out = []
    if isinstance(medium, DefectSpec):
        if x0 < medium.d1 - 1e-12 or x1 > medium.d2 + 1e-12:
            raise InputError("interval leaves the defect region")
        bp = medium.d1 + medium.breakpoints
        for i, pc in enumerate(medium.pieces):
            a, b = max(x0, bp[i]), min(x1, bp[i + 1])
            if b > a:
                out.append((a, b, pc, bp[i]))
        return out
    if isinstance(medium, Piece):
        return [(x0, x1, medium, x0)]
    bp = medium.breakpoints
    n = math.floor(x0)
    while n < x1:
        for i, pc in enumerate(medium.pieces):
            a, b = max(x0, n + bp[i]), min(x1, n + bp[i + 1])
            if b > a:
                out.append((a, b, pc, n + bp[i]))
        n += 1
    return out


def _lift_to_alpha(theta, r):
    m = round(theta / math.pi)
    return m * math.pi + math.atan(r * math.tan(theta - m * math.pi))


def _alpha_to_theta(alpha, r):
    m = round(alpha / math.pi)
    return m * math.pi + math.atan(math.tan(alpha - m * math.pi) / r)


def prufer_evolve(medium, E: float, theta0: float, x0: float, x1: float, log_rho0: float = 0.0) -> PruferState:
    """Advance the Prufer angle from ``x0`` to ``x1 >= x0``.

    ``medium`` is a periodic :class:`MediumProfile`, a :class:`DefectSpec`
    (positions in absolute coordinates) or a single :class:`Piece` starting
    at ``x0``.  Constant pieces at positive energy use the exact rotation
    of the layer; other pieces integrate
    ``theta' = mu cos^2 + E eps sin^2`` and
    ``(log rho)' = (mu - E eps) sin(2 theta) / 2`` with DOP853.
    """
    if x1 < x0:
        raise InputError("need x1 >= x0")
    theta, lr = float(theta0), float(log_rho0)
    for a, b, pc, off in _segments(medium, x0, x1):
        if pc.is_constant and E > 0:
            k = math.sqrt(E * pc.eps * pc.mu)
            r = k / pc.mu  # tan(alpha) = r tan(theta)
            alpha = _lift_to_alpha(theta, r) + k * (b - a)
            T = _layer_jet_local(pc, E, b - a)
            v = T @ np.array([math.sin(theta), math.cos(theta)])
            theta = _alpha_to_theta(alpha, r)
            lr += math.log(float(np.hypot(v[0], v[1])))
        else:
            def rhs(x, y, pc=pc, off=off):
                th = y[0]
                e = float(pc.eps_at(x - off))
                m = float(pc.mu_at(x - off))
                return [m * math.cos(th) ** 2 + E * e * math.sin(th) ** 2, 0.5 * (m - E * e) * math.sin(2 * th)]

            sol = solve_ivp(rhs, (a, b), [theta, lr], method="DOP853", rtol=1e-12, atol=1e-13)
            if not sol.success:
                raise NumericalError(f"Prufer integration failed: {sol.message}")
            theta, lr = float(sol.y[0, -1]), float(sol.y[1, -1])
    return PruferState(float(x1), theta, lr)


def _layer_jet_local(pc, E, d):
    from .propagator import _layer_jet

    return _layer_jet(pc.eps, pc.mu, d, E)[0]


def stability_value(defect: DefectSpec, gap) -> float:
    """``max(sup mu_d, E sup eps_d) (d2 - d1)`` at the top of ``gap``."""
    hi = gap.hi if isinstance(gap, CommonGap) else (gap.upper.E if isinstance(gap, Gap) else float(gap[1]))
    return float(max(defect.mu_sup, hi * defect.eps_sup) * (defect.d2 - defect.d1))


def stability_bound(defect: DefectSpec, gap) -> bool:
    """True when the defect is thin enough that a mode is guaranteed to survive.

    The sufficient condition ``max(sup mu_d, E sup eps_d) (d2 - d1) < pi/2``
    grows with ``E`` and is therefore checked at the top of the gap.
    """
    return stability_value(defect, gap) < 0.5 * np.pi


# --------------------------------------------------------------------------
# defects


def _aligned(v, ref):
    return v if ref is None or float(np.dot(v, ref)) >= 0 else -v


def _defect_h(p1, p2, defect):
    def vecs(E):
        f1 = floquet_eigen(monodromy(p1, E))
        f2 = floquet_eigen(monodromy(p2, E))
        if abs(f1.D) <= 2 or abs(f2.D) <= 2:
            return None, None
        return f1.unit_vecs()[:, 1].real, f2.unit_vecs()[:, 0].real

    def h(E, r2=None, r1=None):
        V2, V1 = vecs(E)
        if V2 is None:
            return np.nan, None, None
        V2 = _aligned(V2, r2)
        V1 = _aligned(V1, r1)
        W = defect_transfer(defect, E) @ V2
        W = W / np.linalg.norm(W)
        return float(W[0] * V1[1] - W[1] * V1[0]), V2, V1

    return h


def defect_mode_search(p1: MediumProfile, p2: MediumProfile, defect: DefectSpec,
                       e_max: float | None = None, gap=None, n_scan: int | None = None) -> list:
    """Interface modes in the presence of a defect slab.

    Roots of ``h(E) = det[M_d V2^(1), V1^(2)]`` with unit eigenvectors whose
    signs are kept continuous along the scan.  An empty defect is handed to
    :func:`find_interface_modes` unchanged.
    """
    if defect.is_empty:
        return find_interface_modes(p1, p2, e_max=e_max, gap=gap)
    if gap is not None:
        gaps = [gap if isinstance(gap, CommonGap) else CommonGap(float(gap[0]), float(gap[1]), 0, 0)]
    else:
        gaps = common_gap(p1, p2, e_max)
    h = _defect_h(p1, p2, defect)
    opt = sum(pc.width * math.sqrt(max(pc.eps_at(np.array([0.0, pc.width]))) * max(pc.mu_at(np.array([0.0, pc.width]))))
              for pc in defect.pieces)
    modes = []
    for cg in gaps:
        dphase = (math.sqrt(cg.hi) - math.sqrt(cg.lo)) * (opt + 2.0)
        n = n_scan or int(max(400, 60 * dphase))
        pad = 1e-9 * (cg.hi - cg.lo)
        for root in _h_roots(h, cg.lo + pad, cg.hi - pad, n):
            mode = _make_mode(p1, p2, defect, root, cg)
            if mode.collinearity < 1e-8:
                modes.append(mode)
    modes.sort(key=lambda m: m.E)
    return modes


def _h_roots(h, lo: float, hi: float, n: int) -> list:
    """Sign changes of the oriented collinearity function on ``[lo, hi]``.

    ``h`` is a function from :func:`_defect_h`; eigenvector signs are carried
    along the ``n``-point scan so that the only sign changes left are
    genuine zeros.
    """
    roots = []
    r2 = r1 = None
    prev = None
    for E in np.linspace(lo, hi, n):
        val, r2n, r1n = h(E, r2, r1)
        if r2n is None:
            prev = None
            r2 = r1 = None
            continue
        if prev is not None and val == 0.0:
            roots.append(float(E))
        elif prev is not None and prev[1] != 0 and np.sign(val) != np.sign(prev[1]):
            Ea, _, ra2, ra1 = prev
            g = lambda x, a2=ra2, a1=ra1: h(x, a2, a1)[0]
            roots.append(brentq(g, Ea, E, xtol=_XTOL, rtol=4 * np.finfo(float).eps, maxiter=300))
        prev = (E, val, r2n, r1n)
        r2, r1 = r2n, r1n
    return roots


@dataclass(frozen=True)
class Counterexample:
    """Two-layer defect built to remove the interface mode, with its checks."""

    defect: DefectSpec
    d_star: float
    gap: CommonGap
    theta_e_d2_E1: float
    theta_e_d2_E2: float
    theta_s_d2_E1: float

    @property
    def valid(self) -> bool:
        return 0 < self.theta_e_d2_E1 < np.pi / 2 and 0 < self.theta_e_d2_E2 < np.pi / 2


def _tt(state: PruferState) -> float:
    return state.theta_tilde


def build_counterexample(p1: MediumProfile, p2: MediumProfile, gap: CommonGap | None = None,
                         layer1=None, layer2=None, d1: float = 0.0) -> DefectSpec:
    """Two-layer defect for which no interface mode survives in ``gap``.

    Thin wrapper around :func:`counterexample_report` returning only the
    defect.
    """
    return counterexample_report(p1, p2, gap, layer1, layer2, d1).defect


def counterexample_report(p1: MediumProfile, p2: MediumProfile, gap: CommonGap | None = None,
                          layer1=None, layer2=None, d1: float = 0.0) -> Counterexample:
    """Two-layer defect for which no interface mode survives in ``gap``.

    Starting from ``U_s = (-1, 0)`` and ``U_e = (0, 1)`` at the gap bottom
    ``E1``, the first layer (with ``E1 eps > mu``) is made just thick enough
    that the polar angles satisfy ``tt_s + tt_e = pi``, and the second layer
    (with ``E1 eps < mu``) until ``tt_s = pi/2``.  The construction is valid
    when ``0 < tt_e(d2; E2) < pi/2`` at the gap top as well; otherwise the gap
    is too wide and an error is raised.

    Parameters
    ----------
    layer1, layer2 : (eps, mu), optional
        Defaults are ``(2/E1, 1)`` and ``(0.5/E1, 1)``.

    Raises
    ------
    PreconditionError
        If the pair does not have the orientation used by the construction
        (left eigenvector turning from ``U_s`` to ``U_e`` across the gap, right
        one from ``U_e`` to ``U_s``) or the gap is too wide.
    """
    if gap is None:
        gaps = common_gap(p1, p2)
        if not gaps:
            raise PreconditionError("the two crystals share no gap")
        gap = gaps[0]
    E1, E2 = gap.lo, gap.hi
    # orientation check at the two ends of the gap
    span = E2 - E1
    Us, Ue = np.array([-1.0, 0.0]), np.array([0.0, 1.0])
    checks = ((p1, 1, E1 + 1e-6 * span, Us), (p1, 1, E2 - 1e-6 * span, Ue),
              (p2, 0, E1 + 1e-6 * span, Ue), (p2, 0, E2 - 1e-6 * span, Us))
    for p, i, E, want in checks:
        V = floquet_eigen(monodromy(p, E)).unit_vecs()[:, i].real
        if abs(abs(float(np.dot(V, want))) - 1.0) > 1e-2:
            side = "left" if p is p1 else "right"
            raise PreconditionError(
                f"{side} eigenvector at E={E:.8g} is {V}, not aligned with {want}; swap the crystals or pick another gap"
            )
    e1, m1 = layer1 if layer1 is not None else (2.0 / E1, 1.0)
    e2, m2 = layer2 if layer2 is not None else (0.5 / E1, 1.0)
    if not E1 * e1 - m1 > 0 or not E1 * e2 - m2 < 0:
        raise InputError("need E1 eps1 > mu1 and E1 eps2 < mu2")
    L1 = Piece(1.0, e1, m1)
    L2 = Piece(1.0, e2, m2)
    th_s0 = 0.5 * np.pi - np.pi     # U_s = (-1, 0) has polar angle pi
    th_e0 = 0.0                     # U_e = (0, 1) has polar angle pi/2

    def tt(piece, th0, d, E):
        return prufer_evolve(piece, E, th0, 0.0, d).theta_tilde if d > 0 else 0.5 * np.pi - th0

    def f1(d):
        return tt(L1, th_s0, d, E1) + tt(L1, th_e0, d, E1) - np.pi

    hi = 1e-3
    while f1(hi) > 0:
        hi *= 2
        if hi > 1e6:
            raise NumericalError("first defect layer does not rotate enough")
    ds = brentq(f1, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    th_s_mid = prufer_evolve(L1, E1, th_s0, 0.0, ds).theta

    def f2(d):
        return tt(L2, th_s_mid, d, E1) - 0.5 * np.pi

    hi = 1e-3
    while f2(hi) > 0:
        hi *= 2
        if hi > 1e6:
            raise NumericalError("second defect layer does not rotate enough")
    dd = brentq(f2, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    defect = DefectSpec(d1, d1 + ds + dd, (Piece(ds, e1, m1), Piece(dd, e2, m2)))

    def tt_through(th0, E):
        st = prufer_evolve(defect, E, th0, defect.d1, defect.d2)
        return st.theta_tilde

    te1 = tt_through(th_e0, E1)
    te2 = tt_through(th_e0, E2)
    ts1 = tt_through(th_s0, E1)
    out = Counterexample(defect, d1 + ds, gap, te1, te2, ts1)
    if not out.valid:
        raise PreconditionError(
            f"gap ({E1:.8g}, {E2:.8g}) too wide for the construction: polar angle at the top is {te2:.4f}"
        )
    return out

