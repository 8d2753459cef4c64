"""
Band edges, dispersion curves, Dirac points and boundary-value spectra.

Band edges are the energies where the discriminant ``D(E)`` equals
``+2`` (quasi-momentum 0) or ``-2`` (quasi-momentum pi).  Between two
consecutive critical points of ``D`` the discriminant is monotone, so the
search first locates all critical points on a scan grid and then brackets
each crossing of ``+-2`` inside a monotone segment.  A critical point where
``D`` touches ``+-2`` is a place where two bands meet; if in addition the
monodromy equals ``+-Id`` it is recorded as a certified Dirac point.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .errors import InputError, NumericalError
from .medium import MediumProfile
from .propagator import discriminant, discriminant_d2E, monodromy, monodromy_jet

logger = logging.getLogger(__name__)

__all__ = [
    "BandEdge",
    "Band",
    "Gap",
    "BandEdgeSet",
    "DispersionCurve",
    "DiracPoint",
    "band_edges",
    "band_structure",
    "dispersion",
    "dirac_points",
    "bc_eigenvalues",
    "interlacing_check",
]

_TOUCH_TOL = 1e-8
_CERT_TOL = 1e-6
_XTOL = 1e-13


@dataclass(frozen=True)
class BandEdge:
    """A solution of ``D(E) = target`` with ``target`` equal to +2 or -2.

    ``kind`` is ``"simple"`` for an ordinary edge and ``"touching"`` where
    two bands meet.  ``certified`` is False for touching points where the
    monodromy is not within tolerance of ``+-Id``, and for simple edges
    created from such a near-degenerate critical point.
    """

    E: float
    target: int
    kind: str = "simple"
    certified: bool = True

    @property
    def k_star(self) -> float:
        return 0.0 if self.target > 0 else float(np.pi)

    @property
    def touching(self) -> bool:
        return self.kind == "touching"


@dataclass(frozen=True)
class Band:
    """Band number ``index`` (starting at 1) between two edges."""

    index: int
    lower: BandEdge
    upper: BandEdge

    @property
    def isolated(self) -> bool:
        return not (self.lower.touching or self.upper.touching)


@dataclass(frozen=True)
class Gap:
    """Open gap above band ``index``."""

    index: int
    lower: BandEdge
    upper: BandEdge

    @property
    def interval(self) -> tuple:
        return (self.lower.E, self.upper.E)

    @property
    def width(self) -> float:
        return self.upper.E - self.lower.E

    @property
    def k_star(self) -> float:
        return self.lower.k_star

    def contains(self, E: float) -> bool:
        return self.lower.E < E < self.upper.E


@dataclass(frozen=True)
class BandEdgeSet:
    """All band edges of a profile on ``[0, e_max]``."""

    profile: MediumProfile
    e_max: float
    edges: tuple
    bands: tuple
    gaps: tuple
    open_lower: float | None = None  # lower edge of a band cut off by e_max

    def band(self, j: int) -> Band:
        if j < 1 or j > len(self.bands):
            raise InputError(f"band {j} not available (have {len(self.bands)} complete bands below E={self.e_max:g})")
        return self.bands[j - 1]

    def gap(self, j: int) -> Gap:
        for g in self.gaps:
            if g.index == j:
                return g
        raise InputError(f"no open gap above band {j}")

    def gap_containing(self, E: float) -> Gap | None:
        for g in self.gaps:
            if g.contains(E):
                return g
        return None

    @property
    def dirac_edges(self) -> tuple:
        return tuple(e for e in self.edges if e.touching)

    def dirac_below(self, E: float) -> int:
        return sum(1 for e in self.edges if e.touching and e.certified and e.E < E)


@dataclass(frozen=True)
class DispersionCurve:
    j: int
    k: np.ndarray
    E: np.ndarray
    residual: float


@dataclass(frozen=True)
class DiracPoint:
    """Crossing of bands ``j`` and ``j + 1`` where the monodromy is ``+-Id``."""

    E: float
    k_star: float
    j: int
    D2: float
    slope: float
    certified: bool = True


def _scan_grid(p: MediumProfile, e_max: float, per_unit: int) -> np.ndarray:
    w_max = np.sqrt(e_max)
    n = int(min(400_000, max(512, np.ceil(per_unit * w_max * max(1.0, p.optical_length)))))
    w = np.linspace(0.0, w_max, n + 1)
    return w * w


def _monotone_roots(f, a, b, fa, fb):
    if fa == 0.0 or fb == 0.0 or np.sign(fa) == np.sign(fb):
        return None
    return brentq(f, a, b, xtol=_XTOL, rtol=4 * np.finfo(float).eps, maxiter=200)


def _critical_points(p, grid, Dp):
    """Zeros of ``D'`` bracketed by sign changes on the grid."""

    def dD(E):
        jet = monodromy_jet(p, E, 1)
        return float(jet[1][0, 0] + jet[1][1, 1])

    s = np.sign(Dp)
    idx = np.nonzero(s[:-1] * s[1:] < 0)[0]
    out = []
    for i in idx:
        out.append(brentq(dD, grid[i], grid[i + 1], xtol=_XTOL, rtol=4 * np.finfo(float).eps, maxiter=200))
    return np.array(out)


def band_edges(p: MediumProfile, e_max: float, per_unit: int = 2000) -> BandEdgeSet:
    """Locate all band edges of ``p`` in ``[0, e_max]``.

    Parameters
    ----------
    p : MediumProfile
    e_max : float
        Upper end of the energy window.
    per_unit : int
        Scan points per unit of ``sqrt(E)``, multiplied by the optical
        length of the cell when it exceeds one.

    Returns
    -------
    BandEdgeSet
        Edges sorted by energy together with the complete bands and open
        gaps they delimit.

    Raises
    ------
    InputError
        If ``e_max`` is not positive.
    NumericalError
        If the edge sequence is inconsistent (a crossing was missed).
    """
    e_max = float(e_max)
    if not e_max > 0:
        raise InputError("e_max must be positive")
    grid = _scan_grid(p, e_max, per_unit)
    jet = monodromy_jet(p, grid, 1)
    Dp = jet[1][..., 0, 0] + jet[1][..., 1, 1]
    crit = _critical_points(p, grid, Dp)

    def Dfun(E):
        return float(discriminant(p, E))

    edges = [BandEdge(0.0, 2, "simple")]
    pinned = {0.0: 2}  # segment ends where D equals a target exactly (double roots)
    shaky = []
    for Ec in crit:
        Dc = Dfun(Ec)
        target = 2 if Dc > 0 else -2
        if abs(Dc - target) >= _TOUCH_TOL:
            continue
        M = monodromy(p, Ec)
        dev = float(np.max(np.abs(M - np.sign(target) * np.eye(2))))
        if dev < _CERT_TOL * max(1.0, float(np.max(np.abs(M)))):
            edges.append(BandEdge(float(Ec), target, "touching", True))
            pinned[float(Ec)] = target
        else:
            logger.warning("near-degenerate critical point at E=%.10g (|M -+ Id| = %.2e)", Ec, dev)
            shaky.append(float(Ec))
    cuts = np.concatenate(([0.0], crit, [e_max]))
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b <= a:
            continue
        Da, Db = Dfun(a), Dfun(b)
        for target in (2, -2):
            fa = 0.0 if pinned.get(float(a)) == target else Da - target
            fb = 0.0 if pinned.get(float(b)) == target else Db - target
            r = _monotone_roots(lambda E, t=target: Dfun(E) - t, a, b, fa, fb)
            if r is None or r <= 0.0:
                continue
            cert = not any(abs(s - r) < 1e-6 * max(1.0, r) for s in shaky)
            edges.append(BandEdge(float(r), target, "simple", cert))
    edges.sort(key=lambda e: e.E)
    return _assemble(p, e_max, edges)


def _assemble(p, e_max, edges) -> BandEdgeSet:
    bands, gaps = [], []
    i, j = 0, 1
    open_lower = None
    while i < len(edges):
        lo = edges[i]
        if i + 1 >= len(edges):
            open_lower = lo.E
            break
        hi = edges[i + 1]
        if lo.target == hi.target and not lo.touching and not hi.touching:
            raise NumericalError(
                f"band {j} of {p!r} has both edges at D={lo.target:+d} (E={lo.E:.10g}, {hi.E:.10g}); a crossing was missed"
            )
        bands.append(Band(j, lo, hi))
        if hi.touching:
            i += 1
        else:
            if i + 2 < len(edges):
                nxt = edges[i + 2]
                if nxt.target != hi.target:
                    raise NumericalError(f"gap above band {j} has edges with different quasi-momenta")
                gaps.append(Gap(j, hi, nxt))
            i += 2
        j += 1
    return BandEdgeSet(p, e_max, tuple(edges), tuple(bands), tuple(gaps), open_lower)


def _initial_emax(p: MediumProfile, n_bands: int) -> float:
    lmin = sum(pc.width * np.sqrt(max(1e-12, _inf(pc.eps) * _inf(pc.mu))) for pc in p.pieces)
    return ((n_bands + 1.0) * np.pi / lmin) ** 2 * 1.2


def _inf(c):
    return float(np.min(c.v)) if hasattr(c, "v") else float(c)


@lru_cache(maxsize=256)
def _band_structure_cached(p: MediumProfile, n_bands: int) -> BandEdgeSet:
    e_max = _initial_emax(p, n_bands)
    for _ in range(12):
        bs = band_edges(p, e_max)
        if len(bs.bands) >= n_bands:
            return bs
        e_max *= 2.0
    raise NumericalError(f"could not find {n_bands} bands")


def band_structure(p: MediumProfile, n_bands: int) -> BandEdgeSet:
    """Band edges on a window wide enough to hold ``n_bands`` complete bands."""
    if n_bands < 1:
        raise InputError("n_bands must be at least 1")
    return _band_structure_cached(p, int(n_bands))


def band_energy(p: MediumProfile, band: Band, k: float) -> float:
    """Energy on ``band`` with quasi-momentum ``|k|`` in ``[0, pi]``."""
    k = abs(float(k))
    if k > np.pi + 1e-12:
        raise InputError("quasi-momentum must lie in [-pi, pi]")
    k = min(k, np.pi)
    target = 2.0 * np.cos(k)
    lo, hi = band.lower, band.upper
    if k == 0.0 or k == np.pi:
        want = 2 if k == 0.0 else -2
        if lo.target == want:
            return lo.E
        if hi.target == want:
            return hi.E
    f = lambda E: float(discriminant(p, E)) - target
    fa, fb = f(lo.E), f(hi.E)
    if fa == 0.0:
        return lo.E
    if fb == 0.0:
        return hi.E
    if np.sign(fa) == np.sign(fb):
        # k sits within rounding of an edge
        return lo.E if abs(fa) < abs(fb) else hi.E
    return brentq(f, lo.E, hi.E, xtol=_XTOL, rtol=4 * np.finfo(float).eps, maxiter=200)


def dispersion(p: MediumProfile, j: int, k_grid) -> DispersionCurve:
    """Dispersion relation ``E_j(k)`` sampled at ``k_grid`` (values in ``[-pi, pi]``).

    Raises
    ------
    InputError
        If band ``j`` does not exist or ``k`` lies outside ``[-pi, pi]``.
    """
    if j < 1:
        raise InputError("band index starts at 1")
    k = np.asarray(k_grid, dtype=float)
    if np.any(np.abs(k) > np.pi + 1e-12):
        raise InputError("quasi-momentum must lie in [-pi, pi]")
    band = band_structure(p, j).band(j)
    E = np.array([band_energy(p, band, kk) for kk in k.ravel()]).reshape(k.shape)
    res = float(np.max(np.abs(discriminant(p, E) - 2 * np.cos(k)))) if k.size else 0.0
    return DispersionCurve(j, k, E, res)


def dirac_points(p: MediumProfile, e_max: float) -> list:
    """Certified band crossings below ``e_max``.

    Each point carries ``D''`` and the dispersion slope ``sqrt(2 / |D''|)``
    of the two crossing branches.
    """
    bs = band_edges(p, e_max)
    out = []
    for e in bs.edges:
        if not e.touching:
            continue
        j = next(b.index for b in bs.bands if b.upper.E == e.E) if any(b.upper.E == e.E for b in bs.bands) else len(bs.bands)
        d2 = discriminant_d2E(p, e.E)
        slope = float(np.sqrt(2.0 / abs(d2))) if d2 != 0 else np.inf
        out.append(DiracPoint(e.E, e.k_star, j, d2, slope, e.certified))
    return out


# --------------------------------------------------------------------------
# boundary-value spectra and interlacing


def _entry_roots(p, bs: BandEdgeSet, entry, count):
    grid = _scan_grid(p, bs.e_max, 2000)
    vals = monodromy(p, grid)[..., entry[0], entry[1]]
    f = lambda E: float(monodromy(p, E)[entry])
    s = np.sign(vals)
    roots = []
    for i in np.nonzero(s[:-1] * s[1:] < 0)[0]:
        roots.append(brentq(f, grid[i], grid[i + 1], xtol=_XTOL, rtol=4 * np.finfo(float).eps, maxiter=200))
    # exact zeros on the grid (rare) are roots too
    for i in np.nonzero(s == 0)[0]:
        roots.append(float(grid[i]))
    return np.array(sorted(roots))[:count]


def bc_eigenvalues(p: MediumProfile, count: int) -> dict:
    """First ``count`` periodic, semi-periodic, Dirichlet and Neumann eigenvalues.

    Periodic and semi-periodic values are roots of ``D = 2`` and ``D = -2``
    counted with multiplicity (a touching point counts twice).  Dirichlet
    values are zeros of ``M[0, 1]`` and Neumann values zeros of ``M[1, 0]``
    on one cell, the latter including ``E = 0``.

    Returns
    -------
    dict
        Keys ``"P"``, ``"S"``, ``"D"``, ``"N"`` mapping to sorted arrays.
    """
    count = int(count)
    if count < 1:
        raise InputError("count must be at least 1")
    bs = band_structure(p, count + 2)
    P, S = [], []
    for e in bs.edges:
        mult = 2 if e.touching else 1
        (P if e.target > 0 else S).extend([e.E] * mult)
    D = _entry_roots(p, bs, (0, 1), count)
    N = np.concatenate(([0.0], _entry_roots(p, bs, (1, 0), count)))
    N = N[N >= 0]
    N = np.unique(np.round(N, 14))[:count] if N.size else N
    out = {"P": np.array(P[:count]), "S": np.array(S[:count]), "D": D[:count], "N": N[:count]}
    for key, v in out.items():
        if v.size < count:
            raise NumericalError(f"found only {v.size} {key} eigenvalues")
    return out


@dataclass
class InterlacingReport:
    ok: bool
    violations: list = field(default_factory=list)
    values: dict = field(default_factory=dict)


def interlacing_check(p: MediumProfile, count: int = 8, slack: float = 1e-8) -> InterlacingReport:
    """Check the ordering of periodic, semi-periodic, Dirichlet and Neumann values.

    The chain is ``N1 <= P1 < S1 <= {N2, D1} <= S2 < P2 <= {N3, D2} <= P3 < ...``.
    Gap ``m`` is bounded by ``(S_m, S_{m+1})`` for odd ``m`` and by
    ``(P_m, P_{m+1})`` for even ``m``; ``D_m`` and ``N_{m+1}`` lie in its
    closure.  Comparisons allow ``slack * (1 + |E|)``.
    """
    vals = bc_eigenvalues(p, count + 1)
    P, S, Dv, N = vals["P"], vals["S"], vals["D"], vals["N"]
    viol = []

    def le(a, b, what):
        if not a <= b + slack * (1 + abs(b)):
            viol.append(f"{what}: {a!r} > {b!r}")

    def lt(a, b, what):
        if not a < b + slack * (1 + abs(b)):
            viol.append(f"{what}: {a!r} >= {b!r}")

    le(N[0], P[0], "N1 <= P1")
    for m in range(1, count + 1):
        X, Y = (S[m - 1], S[m]) if m % 2 else (P[m - 1], P[m])
        name = "S" if m % 2 else "P"
        le(X, Y, f"{name}{m} <= {name}{m + 1}")
        le(X, Dv[m - 1], f"{name}{m} <= D{m}")
        le(Dv[m - 1], Y, f"D{m} <= {name}{m + 1}")
        le(X, N[m], f"{name}{m} <= N{m + 1}")
        le(N[m], Y, f"N{m + 1} <= {name}{m + 1}")
        # band between consecutive gaps has positive width
        if m == 1:
            lt(P[0], S[0], "P1 < S1")
        if m < count:
            nX = P[m] if m % 2 else S[m]
            lt(Y, nX, f"{name}{m + 1} < {'P' if m % 2 else 'S'}{m + 1}")
    return InterlacingReport(not viol, viol, {k: v[:count] for k, v in vals.items()})
