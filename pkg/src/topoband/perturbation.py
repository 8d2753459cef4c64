"""
Gap opening at a Dirac point under a small perturbation.

Write ``L_delta`` for the crystal with coefficients ``eps + delta eps~`` and
``mu + delta mu~``.  Near a Dirac point ``E*`` (where ``M(E*) = s Id`` with
``s = +-1``) the normalised discriminant ``s D(E, delta)`` is

    2 + (a1 t**2 + 2 a2 t delta + a3 delta**2) / 2 + O(3),   t = E - E*,

with ``a1 < 0``.  The coefficients are integrals of the fundamental
solutions ``u, v`` at ``E*`` against ``W = diag(eps, 0)`` and
``F = diag(E* eps~, mu~)``.  When ``a2**2 - a1 a3 > 0`` a gap opens whose
edges move linearly in ``delta``, and the ``+delta`` and ``-delta`` crystals
support an interface mode inside the common gap.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import InputError, NumericalError, PreconditionError
from .interface import (CommonGap, InterfaceMode, _defect_h, _h_roots, _make_mode, _xi_pair,
                        find_interface_modes, impedance)
from .medium import DefectSpec, MediumProfile, PerturbationProfile, _split_at, apply_perturbation
from .propagator import _quadrature_grid, discriminant, discriminant_d2E, fundamental_solution, monodromy
from .spectrum import DiracPoint

logger = logging.getLogger(__name__)

__all__ = [
    "DiracContext",
    "dirac_context",
    "HessianCoeffs",
    "hessian_coeffs",
    "Assumption1",
    "check_assumption1",
    "GapPrediction",
    "gap_prediction",
    "lambda_expansion",
    "perturbed_impedance_R",
    "perturbed_impedance_L",
    "measured_gap",
    "dirac_interface_mode",
]

_CERT_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class DiracContext:
    """Fundamental solutions and coefficient matrices at a Dirac point.

    ``u`` and ``v`` are the columns of ``Psi(x; E*)`` sampled at the Gauss
    nodes ``x`` (weights ``w``); ``W`` and ``F`` are stored through their
    diagonal entries.
    """

    profile: MediumProfile
    perturbation: PerturbationProfile
    dp: DiracPoint
    sign: int
    x: np.ndarray
    w: np.ndarray
    u: np.ndarray
    v: np.ndarray
    W: np.ndarray   # (n, 2) diagonal of diag(eps, 0)
    F: np.ndarray   # (n, 2) diagonal of diag(E* eps~, mu~)

    @property
    def E(self) -> float:
        return self.dp.E

    def wronskian(self) -> np.ndarray:
        return self.u[:, 0] * self.v[:, 1] - self.u[:, 1] * self.v[:, 0]

    def integral(self, a: str, B: str, b: str) -> float:
        """``int a^T B b dx`` for ``a, b`` in ``{"u", "v"}`` and ``B`` in ``{"W", "F"}``."""
        A = getattr(self, a)
        C = getattr(self, b)
        Bd = getattr(self, B)
        return float(np.sum(self.w * (A[:, 0] * Bd[:, 0] * C[:, 0] + A[:, 1] * Bd[:, 1] * C[:, 1])))


def _certify(p: MediumProfile, E: float):
    M = monodromy(p, E)
    D = M[0, 0] + M[1, 1]
    s = 1 if D > 0 else -1
    err = float(np.max(np.abs(M - s * np.eye(2))))
    return s, err, M


def dirac_context(p: MediumProfile, dp, q: PerturbationProfile) -> DiracContext:
    """Assemble ``u, v, W, F`` at the Dirac point ``dp``.

    Parameters
    ----------
    p : MediumProfile
    dp : DiracPoint or float
        A certified Dirac point, or its energy.
    q : PerturbationProfile

    Raises
    ------
    PreconditionError
        If ``M(E*)`` is not ``+-Id`` to within ``1e-6``.
    """
    if not isinstance(dp, DiracPoint):
        E = float(dp)
        s, err, _ = _certify(p, E)
        if err > _CERT_TOL:
            raise PreconditionError(f"E={E:.12g} is not a Dirac point: |M -+ Id| = {err:.2e}")
        d2 = discriminant_d2E(p, E)
        dp = DiracPoint(E, 0.0 if s > 0 else np.pi, 0, d2, math.sqrt(2.0 / abs(d2)), True)
    if not dp.certified:
        raise PreconditionError(f"Dirac point at E={dp.E:.12g} is not certified")
    s, err, _ = _certify(p, dp.E)
    if err > _CERT_TOL:
        raise PreconditionError(f"E={dp.E:.12g} is not a Dirac point: |M -+ Id| = {err:.2e}")
    E = dp.E
    cuts = q.breakpoints[1:-1]
    pieces = _split_at(p.pieces, cuts) if cuts.size else list(p.pieces)
    x, w = _quadrature_grid(pieces, E)
    Psi = fundamental_solution(p, E, x)
    W = np.stack((p.eps(x), np.zeros_like(x)), axis=1)
    F = np.stack((E * q.eps(x), q.mu(x)), axis=1)
    return DiracContext(p, q, dp, s, x, w, Psi[:, :, 0], Psi[:, :, 1], W, F)


@dataclass(frozen=True)
class HessianCoeffs:
    """Second derivatives of the normalised discriminant ``s D`` at ``(E*, 0)``.

    ``a1, a2, a3`` are the ``EE``, ``E delta`` and ``delta delta`` entries.
    The raw integrals are kept for diagnostics; ``beta*`` follow the usual
    naming ``beta1 = int v^T W u`` and so on.
    """

    a1: float
    a2: float
    a3: float
    beta1: float
    beta2: float
    beta1_tilde: float
    beta2_tilde: float
    uWu: float
    uWv: float
    vWv: float
    uFu: float
    uFv: float
    vFv: float
    E_star: float
    sign: int
    fd: tuple | None = None

    @property
    def discriminant(self) -> float:
        """``a2**2 - a1 a3``; a gap opens when it is positive."""
        return self.a2 * self.a2 - self.a1 * self.a3


def _fd_hessian(p, q, E, sign):
    """Central second differences of ``s D(E, delta)`` at ``(E*, 0)``."""
    hE = 1e-4 * max(1.0, E)
    hd = 1e-4
    pp = apply_perturbation(p, q, hd)
    pm = apply_perturbation(p, q, -hd)
    D = lambda prof, e: sign * float(discriminant(prof, e))
    D0 = D(p, E)
    a1 = (D(p, E + hE) - 2 * D0 + D(p, E - hE)) / hE**2
    a3 = (D(pp, E) - 2 * D0 + D(pm, E)) / hd**2
    a2 = (D(pp, E + hE) - D(pp, E - hE) - D(pm, E + hE) + D(pm, E - hE)) / (4 * hE * hd)
    return a1, a2, a3


def hessian_coeffs(ctx: DiracContext, check: bool = True) -> HessianCoeffs:
    """``a1, a2, a3`` from the integrals of ``u, v`` against ``W`` and ``F``.

    * ``a1 = 2 [(uWv)^2 - (vWv)(uWu)]``
    * ``a2 = 2 [(uWv)(uFv) - (vWv)(uFu)/2 - (uWu)(vFv)/2]``
    * ``a3 = 2 [(uFv)^2 - (vFv)(uFu)]``

    where ``aBb`` stands for ``int a^T B b dx``.  The same expressions give
    the derivatives of ``s D`` for both ``M(E*) = Id`` and ``M(E*) = -Id``.

    Parameters
    ----------
    ctx : DiracContext
    check : bool
        Compare with central differences of the perturbed discriminant
        (steps ``1e-4 max(1, E*)`` and ``1e-4``) and raise on a relative
        disagreement above ``1e-3``.  ``a2`` is compared on the scale
        ``sqrt(|a1 a3|)`` because it vanishes for symmetric configurations;
        an absolute floor of ``1e-7`` covers the rounding noise of the
        differences when an entry is zero.

    Raises
    ------
    NumericalError
        On failure of the cross-check.
    """
    I = ctx.integral
    uWu, uWv, vWv = I("u", "W", "u"), I("u", "W", "v"), I("v", "W", "v")
    uFu, uFv, vFv = I("u", "F", "u"), I("u", "F", "v"), I("v", "F", "v")
    s = ctx.sign
    a1 = 2 * (uWv * uWv - vWv * uWu)
    a2 = 2 * (uWv * uFv - 0.5 * vWv * uFu - 0.5 * uWu * vFv)
    a3 = 2 * (uFv * uFv - vFv * uFu)
    fd = None
    if check:
        fd = _fd_hessian(ctx.profile, ctx.perturbation, ctx.E, s)
        scale2 = math.sqrt(abs(a1 * a3))
        checks = (("a1", a1, fd[0], abs(a1)), ("a2", a2, fd[1], max(abs(a2), scale2)), ("a3", a3, fd[2], abs(a3)))
        for name, val, ref, scale in checks:
            if abs(val - ref) > 1e-3 * scale + 1e-7:
                raise NumericalError(f"{name}: quadrature {val:.10g} vs finite difference {ref:.10g}")
    return HessianCoeffs(
        a1=a1, a2=a2, a3=a3,
        beta1=uWv, beta2=vWv, beta1_tilde=uFv, beta2_tilde=vFv,
        uWu=uWu, uWv=uWv, vWv=vWv, uFu=uFu, uFv=uFv, vFv=vFv,
        E_star=ctx.E, sign=s, fd=fd,
    )


@dataclass(frozen=True)
class Assumption1:
    ok: bool
    branch: int          # 1, 2, or 0 when neither case holds
    beta1_tilde: float
    lhs: float           # (int u^T F v)^2
    rhs: float           # (int v^T F v)(int u^T F u)

    def __bool__(self):
        return self.ok


def check_assumption1(hc: HessianCoeffs) -> Assumption1:
    """Evaluate the two cases of the non-degeneracy assumption.

    Case 1: ``int u^T F v >= 0`` and ``(uFv)^2 > (vFv)(uFu)``.
    Case 2: ``int u^T F v < 0`` and ``(uFv)^2 > 2 (vFv)(uFu)``.
    """
    b = hc.uFv
    lhs = b * b
    rhs = hc.vFv * hc.uFu
    if b >= 0 and lhs > rhs:
        br = 1
    elif b < 0 and lhs > 2 * rhs:
        br = 2
    else:
        br = 0
    return Assumption1(br != 0, br, b, lhs, rhs)


@dataclass(frozen=True)
class GapPrediction:
    """First-order motion of the gap edges, ``E* + eta delta``."""

    E_star: float
    eta_minus: float
    eta_plus: float

    def predicted_edges(self, delta: float) -> tuple:
        """Lower and upper gap edge predicted for ``delta``."""
        a = self.E_star + self.eta_minus * delta
        b = self.E_star + self.eta_plus * delta
        return (min(a, b), max(a, b))

    @property
    def width_rate(self) -> float:
        return self.eta_plus - self.eta_minus


def gap_prediction(hc: HessianCoeffs) -> GapPrediction:
    """Roots ``eta_-+`` of ``a1 eta^2 + 2 a2 eta + a3 = 0`` with ``eta_- < 0 < eta_+``.

    The quadratic form is positive (a gap) for ``t/delta`` between the roots,
    ``eta = (-a2 +- sqrt(a2^2 - a1 a3)) / a1``.

    Raises
    ------
    PreconditionError
        If ``a2^2 - a1 a3 <= 0`` (no gap opens at first order).
    """
    disc = hc.discriminant
    # relative floor: rounding leaves ~1e-30 where the exact value is zero
    if not disc > 1e-12 * max(hc.a1 ** 2, hc.a2 ** 2, hc.a3 ** 2):
        raise PreconditionError(f"a2^2 - a1 a3 = {disc:.6g} is not positive; no first-order gap")
    if not hc.a1 < 0:
        raise NumericalError(f"a1 = {hc.a1:.6g} is not negative")
    r = math.sqrt(disc)
    e1 = (-hc.a2 + r) / hc.a1
    e2 = (-hc.a2 - r) / hc.a1
    return GapPrediction(hc.E_star, min(e1, e2), max(e1, e2))


def lambda_expansion(hc: HessianCoeffs, E: float, delta: float) -> float:
    """Leading-order decaying multiplier ``s (1 - sqrt(X / 2))``.

    ``X = a1 t^2 + 2 a2 t delta + a3 delta^2`` with ``t = E - E*``; requires
    ``X > 0`` (a point of the perturbed gap).
    """
    t = E - hc.E_star
    X = hc.a1 * t * t + 2 * hc.a2 * t * delta + hc.a3 * delta * delta
    if X <= 0:
        raise PreconditionError("E is outside the predicted gap")
    return hc.sign * (1.0 - math.sqrt(0.5 * X))


def perturbed_impedance_R(p: MediumProfile, q: PerturbationProfile, delta: float, E: float) -> float:
    """``xi_R`` of the ``+delta`` crystal."""
    return impedance(apply_perturbation(p, q, delta), "right", E)


def perturbed_impedance_L(p: MediumProfile, q: PerturbationProfile, delta: float, E: float) -> float:
    """``xi_L`` of the ``-delta`` crystal."""
    return impedance(apply_perturbation(p, q, -delta), "left", E)


def measured_gap(p: MediumProfile, q: PerturbationProfile, delta: float, E_star: float, window: float) -> tuple:
    """Edges of the gap of the perturbed crystal containing ``E_star``.

    ``window`` bounds the search to ``E_star +- window``.
    """
    pd = apply_perturbation(p, q, delta)
    lo, hi = E_star - window, E_star + window
    s = 1 if discriminant(p, E_star) > 0 else -1
    f = lambda E: s * float(discriminant(pd, E)) - 2.0
    # the perturbed discriminant exceeds 2 somewhere near E*; find its max
    grid = np.linspace(lo, hi, 401)
    vals = np.array([f(E) for E in grid])
    i = int(np.argmax(vals))
    if vals[i] <= 0:
        raise PreconditionError(f"no gap opens near E*={E_star:.10g} for delta={delta:g}")
    left = np.nonzero(vals[:i] <= 0)[0]
    right = np.nonzero(vals[i:] <= 0)[0]
    if not left.size or not right.size:
        raise NumericalError("gap edges fall outside the search window")
    a = brentq(f, grid[left[-1]], grid[left[-1] + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps)
    j = i + right[0]
    b = brentq(f, grid[j - 1], grid[j], xtol=1e-14, rtol=4 * np.finfo(float).eps)
    return a, b


def dirac_interface_mode(p: MediumProfile, q: PerturbationProfile, delta: float, dp=None,
                         tau: float = 0.9, check: bool = True) -> InterfaceMode:
    """Interface mode between the ``-delta`` crystal (left) and ``+delta`` crystal (right).

    Solves ``xi_{R,delta}(E) = xi_{L,-delta}(E)`` by bisection on
    ``E* +- tau min(|eta_-|, |eta_+|) delta``, falling back to the measured
    overlap of the two gaps.  With ``check`` the root is compared with the
    generic solver on the same pair of crystals.

    Raises
    ------
    PreconditionError
        For ``delta == 0``, no Dirac point, or a failed assumption.
    NumericalError
        If ``xi_R - xi_L`` has no sign change on the overlap, or the two
        solvers disagree by more than ``1e-8``.
    """
    delta = float(delta)
    if delta == 0.0:
        raise PreconditionError("delta = 0 opens no gap")
    if dp is None:
        raise InputError("a Dirac point (DiracPoint or energy) is required")
    ctx = dirac_context(p, dp, q)
    hc = hessian_coeffs(ctx, check=False)
    a1r = check_assumption1(hc)
    if not a1r.ok:
        raise PreconditionError(
            f"assumption fails: int u^T F v = {a1r.beta1_tilde:.4g}, (uFv)^2 = {a1r.lhs:.4g}, (vFv)(uFu) = {a1r.rhs:.4g}"
        )
    gp = gap_prediction(hc)
    Es = ctx.E
    pl = apply_perturbation(p, q, -delta)
    pr = apply_perturbation(p, q, delta)

    def g(E):
        xl, _ = _xi_pair(pl, E)
        _, xr = _xi_pair(pr, E)
        return xr - xl

    r = tau * min(abs(gp.eta_minus), abs(gp.eta_plus)) * abs(delta)
    lo, hi = Es - r, Es + r
    ga, gb = g(lo), g(hi)
    if not (np.isfinite(ga) and np.isfinite(gb) and np.sign(ga) != np.sign(gb)):
        win = 3 * max(abs(gp.eta_minus), abs(gp.eta_plus)) * abs(delta)
        gl = measured_gap(p, q, -delta, Es, win)
        gr = measured_gap(p, q, delta, Es, win)
        lo, hi = max(gl[0], gr[0]), min(gl[1], gr[1])
        if not hi > lo:
            raise NumericalError("the gaps of the +delta and -delta crystals do not overlap")
        pad = 1e-9 * (hi - lo)
        grid = np.linspace(lo + pad, hi - pad, 401)
        vals = np.array([g(E) for E in grid])
        idx = [i for i in range(400) if np.isfinite(vals[i]) and np.isfinite(vals[i + 1])
               and np.sign(vals[i]) != np.sign(vals[i + 1]) and max(abs(vals[i]), abs(vals[i + 1])) < 1e6]
        if not idx:
            raise NumericalError(
                "xi_R - xi_L has no sign change on the overlap; samples: "
                + ", ".join(f"({E:.8g}, {v:.3g})" for E, v in zip(grid[::50], vals[::50]))
            )
        lo, hi = grid[idx[0]], grid[idx[0] + 1]
    # the impedance difference may cross through a common pole; the root is
    # taken from the pole-free eigenvector determinant on the same bracket
    roots = _h_roots(_defect_h(pl, pr, DefectSpec(0.0, 0.0)), lo, hi, 64)
    if not roots:
        raise NumericalError(f"no interface mode in ({lo:.12g}, {hi:.12g}): the sign change is a pole")
    E = min(roots, key=lambda x: abs(x - Es))
    mode = _make_mode(pl, pr, DefectSpec(0.0, 0.0), E)
    if mode.collinearity > 1e-8:
        raise NumericalError(f"root at E={E:.12g} fails the collinearity check ({mode.collinearity:.2e})")
    if check:
        span = 3 * max(abs(gp.eta_minus), abs(gp.eta_plus)) * abs(delta)
        gl = measured_gap(p, q, -delta, Es, span)
        gr = measured_gap(p, q, delta, Es, span)
        cg = CommonGap(max(gl[0], gr[0]), min(gl[1], gr[1]), 0, 0)
        others = find_interface_modes(pl, pr, gap=cg)
        if not others or min(abs(m.E - E) for m in others) > 1e-8:
            raise NumericalError(
                f"generic solver disagrees: {E!r} vs {[m.E for m in others]}"
            )
    return mode
