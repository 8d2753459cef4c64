"""
Transfer matrices for the periodic operator ``-(1/eps) (psi'/mu)'``.

The state vector is ``(psi, psi'/mu)``.  It obeys

    d/dx Psi = [[0, mu], [-E eps, 0]] Psi,

whose fundamental matrix ``Psi(x; E)`` starts at the identity.  The value at
``x = 1`` is the monodromy ``M(E)``; its trace ``D(E)`` is the discriminant.

Constant pieces use a closed form written in ``q = E eps mu d**2``:

    T = [[C(q), mu d S(q)], [-E eps d S(q), C(q)]],
    C(q) = cos(sqrt q),  S(q) = sin(sqrt q) / sqrt q,

which is entire in ``E`` (no trouble at ``E = 0``, negative or complex
``E``) and gives exact first and second ``E`` derivatives.  Sampled pieces
are integrated with scipy's DOP853 together with the variational equations
for the ``E`` derivatives.
"""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.integrate import solve_ivp

from .errors import InputError, NumericalError
from .medium import DefectSpec, MediumProfile, Piece, Sampled

logger = logging.getLogger(__name__)

__all__ = [
    "layer_matrix",
    "fundamental_solution",
    "monodromy",
    "monodromy_jet",
    "monodromy_dE",
    "complex_monodromy",
    "discriminant",
    "discriminant_dE",
    "discriminant_d2E",
    "FloquetData",
    "floquet_eigen",
    "defect_transfer",
    "gauss_nodes",
]

_RTOL = 1e-12
_ATOL = 1e-13
_SERIES_RADIUS = 4.0
_NTERMS = 26

# Taylor coefficients of C, S, S', S'' in powers of q
_m = np.arange(_NTERMS)
_C_COEF = [(-1.0) ** k / factorial(2 * k) for k in _m]
_S_COEF = [(-1.0) ** k / factorial(2 * k + 1) for k in _m]
_S1_COEF = [(-1.0) ** (k + 1) * (k + 1) / factorial(2 * k + 3) for k in _m]
_S2_COEF = [(-1.0) ** (k + 2) * (k + 2) * (k + 1) / factorial(2 * k + 5) for k in _m]


def _horner(coef, q):
    out = np.zeros_like(q)
    for c in reversed(coef):
        out = out * q + c
    return out


def _cs(q, order):
    """C, S and the ``q``-derivatives of S needed up to ``order``."""
    q = np.asarray(q)
    cplx = np.iscomplexobj(q)
    dt = complex if cplx else float
    q = q.astype(dt)
    small = np.abs(q) < _SERIES_RADIUS
    C = np.empty_like(q)
    S = np.empty_like(q)
    S1 = np.empty_like(q) if order >= 1 else None
    S2 = np.empty_like(q) if order >= 2 else None
    if np.any(small):
        qs = q[small]
        C[small] = _horner(_C_COEF, qs)
        S[small] = _horner(_S_COEF, qs)
        if order >= 1:
            S1[small] = _horner(_S1_COEF, qs)
        if order >= 2:
            S2[small] = _horner(_S2_COEF, qs)
    big = ~small
    if np.any(big):
        qb = q[big]
        z = np.sqrt(qb.astype(complex))
        cb = np.cos(z)
        sb = np.sin(z) / z
        if not cplx:
            cb, sb = cb.real, sb.real
        C[big] = cb
        S[big] = sb
        if order >= 1:
            s1 = (cb - sb) / (2 * qb)
            S1[big] = s1
            if order >= 2:
                S2[big] = -(sb / 2 + 3 * s1) / (2 * qb)
    return C, S, S1, S2


def _cs_scalar(q, order):
    """Scalar version of :func:`_cs` using ``math``/``cmath``."""
    if isinstance(q, complex):
        fns = cmath
    else:
        fns = math
    if abs(q) < _SERIES_RADIUS:
        C = S = S1 = S2 = 0.0
        for k in range(_NTERMS - 1, -1, -1):
            C = C * q + _C_COEF[k]
            S = S * q + _S_COEF[k]
            if order >= 1:
                S1 = S1 * q + _S1_COEF[k]
            if order >= 2:
                S2 = S2 * q + _S2_COEF[k]
        return C, S, S1, S2
    if fns is math and q < 0:
        z = math.sqrt(-q)
        C, S = math.cosh(z), math.sinh(z) / z
    else:
        z = fns.sqrt(q)
        C, S = fns.cos(z), fns.sin(z) / z
    S1 = (C - S) / (2 * q) if order >= 1 else 0.0
    S2 = -(S / 2 + 3 * S1) / (2 * q) if order >= 2 else 0.0
    return C, S, S1, S2


def _layer_jet_scalar(eps, mu, d, E, order):
    qE = eps * mu * d * d
    C, S, S1, S2 = _cs_scalar(E * qE, order)
    out = [np.array([[C, mu * d * S], [-E * eps * d * S, C]])]
    if order >= 1:
        c1 = -0.5 * S * qE
        out.append(np.array([[c1, mu * d * S1 * qE], [-eps * d * S - E * eps * d * S1 * qE, c1]]))
    if order >= 2:
        c2 = -0.5 * S1 * qE * qE
        out.append(np.array([[c2, mu * d * S2 * qE * qE],
                             [-2 * eps * d * S1 * qE - E * eps * d * S2 * qE * qE, c2]]))
    return out


def _layer_jet(eps, mu, d, E, order=0):
    """Transfer matrix of a constant layer and its ``E`` derivatives.

    ``E`` and ``d`` broadcast against each other.  Returns a list of
    ``order + 1`` arrays of shape ``broadcast(E, d).shape + (2, 2)``.
    """
    if np.ndim(E) == 0 and np.ndim(d) == 0:
        Es = complex(E) if np.iscomplexobj(E) else float(E)
        return _layer_jet_scalar(float(eps), float(mu), float(d), Es, order)
    E = np.asarray(E)
    d = np.asarray(d, dtype=float)
    E, d = np.broadcast_arrays(E, d)
    qE = eps * mu * d * d
    q = E * qE
    C, S, S1, S2 = _cs(q, order)
    dt = C.dtype
    T = np.empty(q.shape + (2, 2), dtype=dt)
    T[..., 0, 0] = C
    T[..., 1, 1] = C
    T[..., 0, 1] = mu * d * S
    T[..., 1, 0] = -E * eps * d * S
    out = [T]
    if order >= 1:
        T1 = np.empty_like(T)
        T1[..., 0, 0] = T1[..., 1, 1] = -0.5 * S * qE
        T1[..., 0, 1] = mu * d * S1 * qE
        T1[..., 1, 0] = -eps * d * S - E * eps * d * S1 * qE
        out.append(T1)
    if order >= 2:
        T2 = np.empty_like(T)
        T2[..., 0, 0] = T2[..., 1, 1] = -0.5 * S1 * qE * qE
        T2[..., 0, 1] = mu * d * S2 * qE * qE
        T2[..., 1, 0] = -2 * eps * d * S1 * qE - E * eps * d * S2 * qE * qE
        out.append(T2)
    return out


def layer_matrix(eps0: float, mu0: float, d: float, omega):
    """Transfer matrix across a constant layer of width ``d`` at frequency ``omega``.

    Equal to ``[[cos(k d), mu sin(k d)/k], [-k sin(k d)/mu, cos(k d)]]`` with
    ``k = omega sqrt(eps mu)``, continued analytically through ``k d = 0``.
    ``omega`` may be complex or an array.

    Examples
    --------
    >>> np.allclose(layer_matrix(1.0, 1.0, 0.5, 0.0), [[1, 0.5], [0, 1]])
    True
    """
    if eps0 <= 0 or mu0 <= 0 or d < 0:
        raise InputError("layer needs eps, mu > 0 and d >= 0")
    omega = np.asarray(omega)
    return _layer_jet(eps0, mu0, d, omega * omega)[0]


def _mul_jet(A, B):
    """Jet of the product ``A @ B`` given jets of both factors."""
    out = [A[0] @ B[0]]
    if len(A) > 1:
        out.append(A[1] @ B[0] + A[0] @ B[1])
    if len(A) > 2:
        out.append(A[2] @ B[0] + 2 * (A[1] @ B[1]) + A[0] @ B[2])
    return out


# --------------------------------------------------------------------------
# sampled pieces


def _sample_nodes(pc: Piece) -> np.ndarray:
    t = [np.array([0.0, 1.0])]
    for c in (pc.eps, pc.mu):
        if isinstance(c, Sampled):
            t.append(c.t)
    return np.unique(np.concatenate(t)) * pc.width


def _sampled_jet(pc: Piece, E, order=0, s_eval=None):
    """Integrate a sampled piece for a flat array of energies.

    Returns the jet at ``s = width`` (shape ``(nE, 2, 2)`` each), or, when
    ``s_eval`` is given (scalar ``E`` only), the plain transfer matrices
    at those local coordinates with shape ``(len(s_eval), 2, 2)``.
    """
    E = np.atleast_1d(np.asarray(E))
    nE = E.size
    cplx = np.iscomplexobj(E)
    dt = complex if cplx else float
    nm = order + 1
    eye = np.broadcast_to(np.eye(2, dtype=dt), (nE, 2, 2))
    y = np.zeros((nm, nE, 2, 2), dtype=dt)
    y[0] = eye

    def rhs(s, yflat):
        Y = yflat.reshape(nm, nE, 2, 2)
        e = float(pc.eps_at(s))
        m = float(pc.mu_at(s))
        dY = np.empty_like(Y)
        # A = [[0, m], [-E e, 0]]
        for j in range(nm):
            dY[j, :, 0, :] = m * Y[j, :, 1, :]
            dY[j, :, 1, :] = -(E * e)[:, None] * Y[j, :, 0, :]
        # forcing from the E derivative of A: JW Y = [[0, 0], [-e, 0]] Y
        if nm > 1:
            dY[1, :, 1, :] += -e * Y[0, :, 0, :]
        if nm > 2:
            dY[2, :, 1, :] += -2 * e * Y[1, :, 0, :]
        return dY.ravel()

    nodes = _sample_nodes(pc)
    samples = []
    if s_eval is not None:
        s_eval = np.asarray(s_eval, dtype=float)
        if nE != 1:
            raise InputError("interior sampling of a sampled piece needs a scalar energy")
        samples = np.empty((s_eval.size, 2, 2), dtype=dt)
        done = np.zeros(s_eval.size, dtype=bool)
        at0 = s_eval <= 0
        samples[at0] = np.eye(2)
        done |= at0
    for a, b in zip(nodes[:-1], nodes[1:]):
        t_eval = None
        if s_eval is not None:
            sel = (s_eval > a) & (s_eval <= b) & ~done
            if np.any(sel):
                t_eval = s_eval[sel]
        sol = solve_ivp(
            rhs, (a, b), y.ravel(), method="DOP853", rtol=_RTOL, atol=_ATOL,
            t_eval=t_eval,
        )
        if not sol.success:
            raise NumericalError(f"integration of sampled piece failed: {sol.message}")
        y = sol.y[:, -1].reshape(nm, nE, 2, 2)
        if t_eval is not None:
            vals = sol.y.T.reshape(-1, nm, nE, 2, 2)[:, 0, 0]
            samples[sel] = vals
            done |= sel
    if s_eval is not None:
        return samples
    return [y[j] for j in range(nm)]


def _piece_jet(pc: Piece, E, order=0):
    if pc.is_constant:
        return _layer_jet(pc.eps, pc.mu, pc.width, E, order)
    E = np.asarray(E)
    shape = E.shape
    out = [np.empty(shape + (2, 2), dtype=complex if np.iscomplexobj(E) else float) for _ in range(order + 1)]
    flat = E.ravel()
    chunk = 4096
    for i in range(0, flat.size, chunk):
        part = _sampled_jet(pc, flat[i:i + chunk], order)
        for j in range(order + 1):
            out[j].reshape(-1, 2, 2)[i:i + chunk] = part[j]
    return out


def _chain_jet(pieces, E, order=0):
    if np.ndim(E) == 0 and all(pc.is_constant for pc in pieces):
        Es = complex(E) if np.iscomplexobj(E) else float(E)
        dt = complex if isinstance(Es, complex) else float
        jet = [np.eye(2, dtype=dt)] + [np.zeros((2, 2), dtype=dt) for _ in range(order)]
        for pc in pieces:
            jet = _mul_jet(_layer_jet_scalar(pc.eps, pc.mu, pc.width, Es, order), jet)
        return jet
    E = np.asarray(E)
    dt = complex if np.iscomplexobj(E) else float
    eye = np.broadcast_to(np.eye(2, dtype=dt), E.shape + (2, 2)).copy()
    jet = [eye] + [np.zeros_like(eye) for _ in range(order)]
    for pc in pieces:
        jet = _mul_jet(_piece_jet(pc, E, order), jet)
    return jet


# --------------------------------------------------------------------------
# public API


def monodromy_jet(p: MediumProfile, E, order: int = 2):
    """``[M, dM/dE, d2M/dE2]`` (truncated to ``order``) at energies ``E``.

    Derivatives come from the closed-form layer jets or from the
    variational equations on sampled pieces, so they are exact up to
    integration error.
    """
    if order not in (0, 1, 2):
        raise InputError("order must be 0, 1 or 2")
    return _chain_jet(p.pieces, E, order)


def monodromy(p: MediumProfile, E):
    """Monodromy matrix ``Psi(1; E)``.  ``E`` may be an array or complex."""
    return _chain_jet(p.pieces, E, 0)[0]


def complex_monodromy(p: MediumProfile, omega):
    """Monodromy at complex frequency, ``M(omega**2)``."""
    omega = np.asarray(omega, dtype=complex)
    return monodromy(p, omega * omega)


def discriminant(p: MediumProfile, E):
    """``D(E) = trace M(E)``; vectorised over ``E``."""
    M = monodromy(p, E)
    return M[..., 0, 0] + M[..., 1, 1]


def discriminant_dE(p: MediumProfile, E):
    jet = _chain_jet(p.pieces, E, 1)
    return jet[1][..., 0, 0] + jet[1][..., 1, 1]


def _energy_scale(p: MediumProfile, E: float) -> float:
    """Energy increment over which ``D`` changes by a modest fraction of a period."""
    L = max(p.optical_length, 1e-3)
    return 2.0 * (1.0 + np.sqrt(abs(E))) / L


def discriminant_d2E(p: MediumProfile, E: float, check: bool = True) -> float:
    """Second ``E`` derivative of the discriminant.

    The value comes from the second variational equation (equivalently the
    iterated integral of ``Psi^{-1} J W Psi``).  With ``check`` set, it is
    compared with a Richardson-extrapolated central difference and a
    disagreement above 1e-3 relative raises :class:`NumericalError`.
    """
    E = float(E)
    jet = _chain_jet(p.pieces, E, 2)
    val = float(np.real(jet[2][0, 0] + jet[2][1, 1]))
    if check:
        h = 0.02 * _energy_scale(p, E)

        def cd(hh):
            Es = np.array([E - hh, E, E + hh])
            Dv = discriminant(p, Es)
            return (Dv[0] - 2 * Dv[1] + Dv[2]) / (hh * hh)

        fd = (4 * cd(h / 2) - cd(h)) / 3
        scale = max(abs(val), abs(fd), 1e-6 / _energy_scale(p, E) ** 2)
        if abs(val - fd) > 1e-3 * scale:
            raise NumericalError(f"D'' mismatch at E={E:g}: variational {val:.10g}, difference {fd:.10g}")
    return val


def gauss_nodes(a: float, b: float, n: int):
    """Gauss-Legendre nodes and weights on ``[a, b]``."""
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1), half * w


def _quadrature_grid(pieces, E):
    """Per-piece Gauss nodes fine enough for the oscillation at energy ``E``."""
    xs, ws = [], []
    start = 0.0
    for pc in pieces:
        if pc.is_constant:
            edges = np.array([0.0, pc.width])
        else:
            edges = _sample_nodes(pc)
        for a, b in zip(edges[:-1], edges[1:]):
            ph = np.sqrt(abs(E) * max(float(np.max(pc.eps_at(np.array([a, b])))), 1e-300)
                         * float(np.max(pc.mu_at(np.array([a, b]))))) * (b - a)
            n = int(min(400, 24 + 2 * np.ceil(ph)))
            x, w = gauss_nodes(start + a, start + b, n)
            xs.append(x)
            ws.append(w)
        start += pc.width
    return np.concatenate(xs), np.concatenate(ws)


def fundamental_solution(p: MediumProfile, E, x):
    """Fundamental matrix ``Psi(x; E)`` for real ``x`` (scalar energy).

    Uses the cocycle ``Psi(x + n) = Psi(x) M**n`` outside ``[0, 1)``.
    Returns an array of shape ``np.shape(x) + (2, 2)``.
    """
    x = np.asarray(x, dtype=float)
    E = complex(E) if np.iscomplexobj(E) else float(E)
    dt = complex if isinstance(E, complex) else float
    flat = x.ravel()
    n = np.floor(flat).astype(int)
    y = flat - n
    out = np.empty((flat.size, 2, 2), dtype=dt)
    bp = p.breakpoints
    idx = np.clip(np.searchsorted(bp, y, side="right") - 1, 0, len(p.pieces) - 1)
    left = np.eye(2, dtype=dt)
    for i, pc in enumerate(p.pieces):
        m = idx == i
        if np.any(m):
            s = y[m] - bp[i]
            if pc.is_constant:
                T = _layer_jet(pc.eps, pc.mu, s, E)[0]
            else:
                T = _sampled_jet(pc, E, 0, s_eval=s)
            out[m] = T @ left
        left = _piece_jet(pc, E)[0] @ left
    M = left
    if np.any(n != 0):
        Minv = np.array([[M[1, 1], -M[0, 1]], [-M[1, 0], M[0, 0]]])
        for k in np.unique(n):
            if k == 0:
                continue
            P = np.linalg.matrix_power(M if k > 0 else Minv, abs(int(k)))
            sel = n == k
            out[sel] = out[sel] @ P
    return out.reshape(x.shape + (2, 2))


def monodromy_dE(p: MediumProfile, E):
    """``dM/dE`` from the quadrature ``M * int_0^1 Psi^{-1} J W Psi dt``.

    Here ``J W = [[0, 0], [-eps, 0]]``.  This is an independent route to the
    derivative returned by :func:`monodromy_jet`.
    """
    E = complex(E) if np.iscomplexobj(E) else float(E)
    xq, wq = _quadrature_grid(p.pieces, E)
    Psi = fundamental_solution(p, E, xq)
    eps = p.eps(xq)
    a, b = Psi[:, 0, 0], Psi[:, 0, 1]
    # Psi^{-1} = [[d, -b], [-c, a]];  Psi^{-1} [[0,0],[-e,0]] Psi
    g = np.empty_like(Psi)
    g[:, 0, 0] = b * eps * a
    g[:, 0, 1] = b * eps * b
    g[:, 1, 0] = -a * eps * a
    g[:, 1, 1] = -a * eps * b
    integral = np.einsum("i,ijk->jk", wq, g)
    M = monodromy(p, E)
    return M @ integral


@dataclass(frozen=True)
class FloquetData:
    """Floquet multipliers and eigenvectors of a monodromy matrix.

    ``lam[0]`` is the multiplier of smaller modulus (the one decaying to the
    right in a gap); inside a band ``lam[0]`` has non-negative imaginary
    part.  ``vecs[:, i]`` is the eigenvector ``(M01, lam_i - M00)`` (or the
    alternative ``(lam_i - M11, M10)`` when that one vanishes).
    """

    M: np.ndarray
    D: complex
    lam: np.ndarray
    vecs: np.ndarray

    @property
    def in_gap(self) -> bool:
        return bool(abs(np.imag(self.D)) < 1e-300 and abs(np.real(self.D)) > 2)

    def unit_vecs(self) -> np.ndarray:
        return self.vecs / np.linalg.norm(self.vecs, axis=0)


def floquet_eigen(M, tol: float = 1e-12) -> FloquetData:
    """Multipliers ``(D -+ sqrt(D**2 - 4)) / 2`` and their eigenvectors.

    Raises
    ------
    NumericalError
        When ``M`` is a multiple of the identity, so that no eigenvector is
        singled out.
    """
    M = np.asarray(M)
    D = M[0, 0] + M[1, 1]
    cplx = np.iscomplexobj(M) and np.any(np.imag(M) != 0)
    if not cplx:
        D = float(np.real(D))
        M = np.real(M)
        if abs(D) > 2:
            big = (D + np.copysign(np.sqrt(D * D - 4), D)) / 2
            lam = np.array([1.0 / big, big])
        else:
            r = np.sqrt(max(0.0, 4 - D * D))
            lam = np.array([(D + 1j * r) / 2, (D - 1j * r) / 2])
    else:
        D = complex(D)
        s = np.sqrt(D * D - 4)
        big = (D + s) / 2
        if abs(big) < abs((D - s) / 2):
            big = (D - s) / 2
        lam = np.array([1.0 / big, big])
    scale = max(1.0, float(np.max(np.abs(M))))
    dt = complex if np.iscomplexobj(lam) else float
    vecs = np.empty((2, 2), dtype=dt)
    for i, li in enumerate(lam):
        v1 = np.array([M[0, 1], li - M[0, 0]])
        v2 = np.array([li - M[1, 1], M[1, 0]])
        n1, n2 = np.linalg.norm(v1), np.linalg.norm(v2)
        if max(n1, n2) <= tol * scale:
            raise NumericalError("monodromy is a multiple of the identity; eigenvector not unique")
        vecs[:, i] = v1 if n1 >= n2 * 1e-3 else v2
    return FloquetData(M=M, D=D, lam=lam, vecs=vecs)


def defect_transfer(defect: DefectSpec, E):
    """Transfer matrix across the defect slab from ``d1`` to ``d2``."""
    E = np.asarray(E)
    if defect.is_empty:
        dt = complex if np.iscomplexobj(E) else float
        return np.broadcast_to(np.eye(2, dtype=dt), E.shape + (2, 2)).copy()
    return _chain_jet(defect.pieces, E, 0)[0]
