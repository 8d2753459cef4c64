"""
Bloch modes, Zak phases, band-edge parities and bulk indices.

A Bloch mode of band ``j`` at quasi-momentum ``k`` in ``[0, pi]`` is built
from the fundamental solutions at ``E = E_j(k)`` as

    phi = M01 psi_1 + (exp(ik) - M00) psi_2,

normalised in the ``eps``-weighted norm, with ``phi = i psi_2`` in the
degenerate case where both coefficients vanish.  Negative ``k`` uses the
complex conjugate.  The periodic part is ``u = exp(-ikx) phi``.

The Zak phase is computed in two independent ways: a discrete Wilson loop
over the periodic parts, and for inversion-symmetric cells from the parity
of the band-edge modes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericalError, PreconditionError
from .medium import MediumProfile, is_inversion_symmetric
from .propagator import fundamental_solution, monodromy
from .spectrum import Band, band_energy, band_structure

logger = logging.getLogger(__name__)

__all__ = [
    "CellGrid",
    "BlochMode",
    "ZakPhase",
    "EdgeParity",
    "BulkIndex",
    "cell_grid",
    "bloch_mode",
    "zak_wilson",
    "edge_parity",
    "zak_parity",
    "zak_pair_dirac",
    "bulk_index",
]


@dataclass(frozen=True, eq=False)
class CellGrid:
    """Sampling grid on ``[0, 1]`` with a matching quadrature rule.

    ``x`` holds the cell nodes (uniform points plus every piece boundary).
    ``xq``/``wq`` is a composite Simpson rule whose points are the nodes and
    the cell midpoints; ``eps_q`` is the permittivity at the quadrature
    points, taken from the piece that owns each cell so that boundary
    nodes get the correct one-sided value.
    """

    x: np.ndarray
    xq: np.ndarray
    wq: np.ndarray
    eps_q: np.ndarray
    node_index: np.ndarray  # position of each node of x inside xq


def cell_grid(p: MediumProfile, n: int = 2048) -> CellGrid:
    if n < 4:
        raise InputError("grid needs at least 4 cells")
    x = np.unique(np.concatenate((np.linspace(0.0, 1.0, n + 1), p.breakpoints)))
    x = x[np.concatenate(([True], np.diff(x) > 1e-14))]
    x[-1] = 1.0
    a, b = x[:-1], x[1:]
    m = 0.5 * (a + b)
    h = b - a
    bp = p.breakpoints
    idx = np.clip(np.searchsorted(bp, m, side="right") - 1, 0, len(p.pieces) - 1)
    ncell = a.size
    xq = np.empty(2 * ncell + 1)
    xq[0::2] = x
    xq[1::2] = m
    eps_l = np.empty(ncell)
    eps_m = np.empty(ncell)
    eps_r = np.empty(ncell)
    for i, pc in enumerate(p.pieces):
        sel = idx == i
        if np.any(sel):
            lo = bp[i]
            eps_l[sel] = pc.eps_at(np.clip(a[sel] - lo, 0, pc.width))
            eps_m[sel] = pc.eps_at(np.clip(m[sel] - lo, 0, pc.width))
            eps_r[sel] = pc.eps_at(np.clip(b[sel] - lo, 0, pc.width))
    # expand to per-cell Simpson triples so one-sided values stay separate
    xt = np.stack((a, m, b), axis=1).ravel()
    wt = (h[:, None] * np.array([1.0, 4.0, 1.0])[None, :] / 6.0).ravel()
    et = np.stack((eps_l, eps_m, eps_r), axis=1).ravel()
    return CellGrid(x=x, xq=xt, wq=wt, eps_q=et, node_index=np.arange(x.size))


@dataclass(frozen=True, eq=False)
class BlochMode:
    """Normalised Bloch mode sampled on the quadrature points of a grid."""

    j: int
    k: float
    E: float
    grid: CellGrid
    phi: np.ndarray  # values at grid.xq
    gauge: str

    @property
    def u(self) -> np.ndarray:
        """Periodic part ``exp(-ikx) phi`` at the quadrature points."""
        return np.exp(-1j * self.k * self.grid.xq) * self.phi

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.grid.wq * self.grid.eps_q * np.abs(self.phi) ** 2)))

    def on_nodes(self):
        """``(x, phi)`` on the cell nodes."""
        g = self.grid
        vals = np.empty(g.x.size, dtype=complex)
        vals[:-1] = self.phi[0::3]
        vals[-1] = self.phi[-1]
        return g.x, vals


def _inner(grid: CellGrid, a, b) -> complex:
    """``(a, b)_X = int eps a conj(b) dx``."""
    return complex(np.sum(grid.wq * grid.eps_q * a * np.conj(b)))


def _raw_mode(p: MediumProfile, E: float, k: float, grid: CellGrid):
    """Unnormalised mode at ``k`` in ``[0, pi]`` and the gauge used."""
    M = monodromy(p, E)
    Psi = fundamental_solution(p, E, grid.xq)
    psi1, psi2 = Psi[:, 0, 0], Psi[:, 0, 1]
    c1 = M[0, 1]
    c2 = np.exp(1j * k) - M[0, 0]
    scale = max(1.0, float(np.max(np.abs(M))))
    if abs(c1) < 1e-8 * scale and abs(c2) < 1e-8 * scale:
        return 1j * psi2, "degenerate"
    return c1 * psi1 + c2 * psi2, "generic"


def _mode_from_band(p, band: Band, k: float, grid: CellGrid) -> BlochMode:
    kk = float(k)
    if abs(kk) > np.pi + 1e-12:
        raise InputError("quasi-momentum must lie in [-pi, pi]")
    ka = min(abs(kk), np.pi)
    E = band_energy(p, band, ka)
    phi, gauge = _raw_mode(p, E, ka, grid)
    nrm = np.sqrt(np.sum(grid.wq * grid.eps_q * np.abs(phi) ** 2))
    if not nrm > 0:
        raise NumericalError(f"zero Bloch mode for band {band.index} at k={k}")
    phi = phi / nrm
    if kk < 0:
        phi = np.conj(phi)
    return BlochMode(band.index, kk, E, grid, phi, gauge)


def bloch_mode(p: MediumProfile, j: int, k: float, n_grid: int = 2048) -> BlochMode:
    """Normalised Bloch mode of band ``j`` at quasi-momentum ``k``.

    Examples
    --------
    >>> from topoband.medium import homogeneous
    >>> m = bloch_mode(homogeneous(), 1, 0.5)
    >>> round(m.E, 12), round(m.norm(), 12)
    (0.25, 1.0)
    """
    if j < 1:
        raise InputError("band index starts at 1")
    band = band_structure(p, j).band(j)
    return _mode_from_band(p, band, k, cell_grid(p, n_grid))


@dataclass(frozen=True)
class ZakPhase:
    theta: float
    N: int
    min_link: float
    converged: bool


def _wilson(modes_u, grid, x_phase) -> tuple:
    N = len(modes_u)
    total = 0.0
    min_link = np.inf
    for n in range(N):
        a = modes_u[n + 1] if n + 1 < N else x_phase * modes_u[0]
        link = _inner(grid, a, modes_u[n])
        min_link = min(min_link, abs(link))
        total -= np.angle(link)
    return float(np.mod(total, 2 * np.pi)), float(min_link)


def zak_wilson(p: MediumProfile, j: int, N: int = 256, refine: bool = True,
               n_grid: int = 2048, max_N: int = 4096) -> ZakPhase:
    """Zak phase of band ``j`` from the discrete Wilson loop.

    ``theta = sum_n -Im log (u_{k_{n+1}}, u_{k_n})`` with
    ``k_n = -pi + 2 pi n / N``; the loop is closed with
    ``u_{k_N} = exp(-2 pi i x) u_{k_0}``, which keeps the sum independent of
    the phase of every mode.  With ``refine`` the resolution is doubled
    until two successive values differ by less than 1e-2.

    Returns
    -------
    ZakPhase
        ``theta`` in ``[0, 2 pi)``.
    """
    if N < 4:
        raise InputError("N must be at least 4")
    band = band_structure(p, j).band(j)
    grid = cell_grid(p, n_grid)
    xph = np.exp(-2j * np.pi * grid.xq)
    cache = {}

    def u_at(n, NN):
        # key on the exact rational k = -pi + 2 pi n / NN
        from fractions import Fraction
        key = Fraction(n, NN)
        if key not in cache:
            k = -np.pi + 2 * np.pi * float(key)
            cache[key] = _mode_from_band(p, band, k, grid).u
        return cache[key]

    def theta_for(NN):
        us = [u_at(n, NN) for n in range(NN)]
        return _wilson(us, grid, xph)

    th, ml = theta_for(N)
    if ml < 1e-3:
        logger.warning("Wilson loop link modulus %.2e below 1e-3 for band %d; refine N", ml, j)
    if not refine:
        return ZakPhase(th, N, ml, False)
    NN = N
    while NN < max_N:
        th2, ml2 = theta_for(2 * NN)
        diff = abs(np.angle(np.exp(1j * (th2 - th))))
        NN *= 2
        th, ml = th2, ml2
        if diff < 1e-2:
            return ZakPhase(th, NN, ml, True)
    return ZakPhase(th, NN, ml, False)


@dataclass(frozen=True)
class EdgeParity:
    """Parity (+1 even, -1 odd) of the band-edge mode at energy ``E``."""

    parity: int
    E: float
    k: float
    witness: float  # max |psi(x) -+ psi(-x)| / max |psi|

    @property
    def label(self) -> str:
        return "even" if self.parity > 0 else "odd"


def _require_symmetric(p):
    if not is_inversion_symmetric(p):
        raise PreconditionError("parity and bulk index need an inversion-symmetric cell")


def _parity_at(p: MediumProfile, edge, n_grid=512) -> EdgeParity:
    if edge.touching:
        raise PreconditionError(f"edge at E={edge.E:.10g} is a band crossing; the edge mode is not unique")
    M = monodromy(p, edge.E)
    s = 1.0 if edge.target > 0 else -1.0
    _, sv, vh = np.linalg.svd(M - s * np.eye(2))
    a = vh[-1]
    a = a / np.linalg.norm(a)
    tol = 1e-6
    if abs(a[1]) < tol:
        par = 1
    elif abs(a[0]) < tol:
        par = -1
    else:
        raise NumericalError(f"edge mode at E={edge.E:.10g} is neither even nor odd (coefficients {a})")
    x = np.linspace(0.0, 0.5, n_grid + 1)
    Psi_p = fundamental_solution(p, edge.E, x)
    Psi_m = fundamental_solution(p, edge.E, -x)
    psi_p = Psi_p[:, 0, :] @ a
    psi_m = Psi_m[:, 0, :] @ a
    wit = float(np.max(np.abs(psi_p - par * psi_m)) / max(np.max(np.abs(psi_p)), 1e-300))
    return EdgeParity(par, edge.E, edge.k_star, wit)


def edge_parity(p: MediumProfile, j: int, which: str = "upper") -> EdgeParity:
    """Parity of the edge mode of band ``j`` at its ``"lower"`` or ``"upper"`` edge.

    ``which`` may also be ``0`` or ``pi`` (the quasi-momentum of the edge).

    Raises
    ------
    PreconditionError
        If the cell is not inversion-symmetric or the edge is a crossing.
    """
    _require_symmetric(p)
    band = band_structure(p, j + 1).band(j)
    if which in ("lower", "upper"):
        edge = band.lower if which == "lower" else band.upper
    else:
        kk = float(which)
        want = 2 if abs(kk) < 1e-12 else -2
        if abs(kk) > 1e-12 and abs(abs(kk) - np.pi) > 1e-12:
            raise InputError("edge quasi-momentum must be 0 or pi")
        edge = band.lower if band.lower.target == want else band.upper
    return _parity_at(p, edge)


def zak_parity(p: MediumProfile, j: int) -> float:
    """Zak phase of an isolated band from its two edge parities (0 or pi)."""
    _require_symmetric(p)
    band = band_structure(p, j + 1).band(j)
    if not band.isolated:
        raise PreconditionError(f"band {j} touches a neighbour; use zak_pair_dirac")
    a = _parity_at(p, band.lower)
    b = _parity_at(p, band.upper)
    return 0.0 if a.parity == b.parity else float(np.pi)


def zak_pair_dirac(p: MediumProfile, j: int) -> float:
    """Sum of the Zak phases of bands ``j`` and ``j + 1`` that meet at a crossing.

    Uses the parities at the edges opposite to the crossing: 0 when they
    agree, pi otherwise.
    """
    _require_symmetric(p)
    bs = band_structure(p, j + 2)
    lo, hi = bs.band(j), bs.band(j + 1)
    if not lo.upper.touching:
        raise PreconditionError(f"bands {j} and {j + 1} do not meet")
    a = _parity_at(p, lo.lower)
    b = _parity_at(p, hi.upper)
    return 0.0 if a.parity == b.parity else float(np.pi)


@dataclass(frozen=True)
class BulkIndex:
    gamma: int
    gamma_parity: int
    ell: int
    theta_sum: float
    parity: EdgeParity


def bulk_index(p: MediumProfile, j: int) -> BulkIndex:
    """Bulk index of the gap above band ``j``.

    ``gamma = (-1)**(j + ell - 1) exp(i sum_m theta_m)``, with ``ell`` the
    number of crossings below the gap and the Zak phases of bands that meet
    at a crossing taken in pairs.  The value is checked against the parity
    of the edge mode at the top of band ``j`` (even gives +1).

    Raises
    ------
    PreconditionError
        If the cell is not symmetric or the gap above band ``j`` is closed.
    NumericalError
        If the two evaluations disagree.
    """
    _require_symmetric(p)
    bs = band_structure(p, j + 1)
    band = bs.band(j)
    if band.upper.touching:
        raise PreconditionError(f"gap above band {j} is closed")
    ell = bs.dirac_below(band.upper.E)
    total = 0.0
    m = 1
    while m <= j:
        b = bs.band(m)
        if b.upper.touching:
            if m + 1 > j or bs.band(m + 1).upper.touching:
                raise PreconditionError(f"crossing chain at band {m}; pair formula does not apply")
            total += zak_pair_dirac(p, m)
            m += 2
        else:
            if b.lower.touching:
                raise PreconditionError(f"band {m} is not isolated")
            total += zak_parity(p, m)
            m += 1
    gamma = int(round(((-1) ** (j + ell - 1)) * np.cos(total)))
    par = _parity_at(p, band.upper)
    if gamma != par.parity:
        raise NumericalError(
            f"bulk index mismatch for band {j}: formula gives {gamma:+d}, edge parity gives {par.parity:+d}"
        )
    return BulkIndex(gamma, par.parity, ell, float(np.mod(total, 2 * np.pi)), par)
