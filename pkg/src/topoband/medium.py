"""
Periodic media on the unit cell.

A medium is described by two coefficient functions, the permittivity
``eps`` and the permeability ``mu``, both periodic with period one.  On a
single cell ``[0, 1)`` each function is piecewise: the cell is split into
pieces, and on each piece a coefficient is either a positive constant or a
piecewise-linear sample table.  Layered (piecewise-constant) media are the
common case and the propagator has closed forms for them.

The same piece machinery is reused for signed perturbation profiles, for
the finite defect slab placed between two crystals and for the finite
structures used in scattering calculations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import InputError

__all__ = [
    "Sampled",
    "Piece",
    "MediumProfile",
    "PerturbationProfile",
    "DefectSpec",
    "FiniteStructure",
    "homogeneous",
    "layered",
    "parse_structure",
    "parse_perturbation",
    "parse_defect",
    "structure_to_dict",
    "shift_origin",
    "apply_perturbation",
    "is_inversion_symmetric",
    "load_bundled",
]

_WIDTH_TOL = 1e-12
_SNAP = 1e-13


@dataclass(frozen=True, eq=False)
class Sampled:
    """Piecewise-linear coefficient on one piece.

    Parameters
    ----------
    t : ndarray
        Strictly increasing node positions as fractions of the piece width,
        starting at 0 and ending at 1.
    v : ndarray
        Values at the nodes.
    """

    t: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise InputError("sampled coefficient needs at least two nodes")
        if abs(t[0]) > 0 or abs(t[-1] - 1.0) > 0 or np.any(np.diff(t) <= 0):
            raise InputError("sample nodes must increase from 0 to 1")
        if not np.all(np.isfinite(v)):
            raise InputError("sampled coefficient contains non-finite values")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", v)

    @classmethod
    def uniform(cls, values) -> "Sampled":
        v = np.asarray(values, dtype=float)
        return cls(np.linspace(0.0, 1.0, v.size), v)

    def __call__(self, s):
        return np.interp(s, self.t, self.v)

    def key(self):
        return (self.t.tobytes(), self.v.tobytes())

    def restrict(self, a: float, b: float) -> "Sampled":
        """Restriction to the fractional sub-interval ``[a, b]``, rescaled to [0, 1]."""
        inner = self.t[(self.t > a) & (self.t < b)]
        t = np.concatenate(([a], inner, [b]))
        v = np.interp(t, self.t, self.v)
        return Sampled((t - a) / (b - a), v)


Coefficient = "float | Sampled"


def _coef_key(c):
    return ("s",) + c.key() if isinstance(c, Sampled) else ("c", float(c))


def _coef_sup(c) -> float:
    return float(np.max(c.v)) if isinstance(c, Sampled) else float(c)


def _coef_inf(c) -> float:
    return float(np.min(c.v)) if isinstance(c, Sampled) else float(c)


def _coef_abs_sup(c) -> float:
    return float(np.max(np.abs(c.v))) if isinstance(c, Sampled) else abs(float(c))


def _coef_eval(c, s):
    if isinstance(c, Sampled):
        return c(s)
    return np.full(np.shape(s), float(c))


def _coef_restrict(c, a, b):
    if isinstance(c, Sampled):
        return c.restrict(a, b)
    return float(c)


def _coef_reverse(c):
    if isinstance(c, Sampled):
        return Sampled(1.0 - c.t[::-1], c.v[::-1])
    return c


def _coef_scale(c, f):
    if isinstance(c, Sampled):
        return Sampled(c.t, c.v * f)
    return float(c) * f


def _coef_sum(c1, c2, f2):
    """Pointwise ``c1 + f2 * c2`` on a common piece."""
    if not isinstance(c1, Sampled) and not isinstance(c2, Sampled):
        return float(c1) + f2 * float(c2)
    nodes = [np.array([0.0, 1.0])]
    for c in (c1, c2):
        if isinstance(c, Sampled):
            nodes.append(c.t)
    t = np.unique(np.concatenate(nodes))
    return Sampled(t, _coef_eval(c1, t) + f2 * _coef_eval(c2, t))


def _coerce_coef(raw, what: str):
    if isinstance(raw, Sampled):
        return raw
    if isinstance(raw, dict):
        if "grid" not in raw:
            raise InputError(f"{what}: sampled coefficient needs a 'grid' list")
        vals = np.asarray(raw["grid"], dtype=float)
        if "nodes" in raw:
            return Sampled(np.asarray(raw["nodes"], dtype=float), vals)
        return Sampled.uniform(vals)
    if isinstance(raw, (list, tuple, np.ndarray)):
        return Sampled.uniform(raw)
    try:
        val = float(raw)
    except (TypeError, ValueError):
        raise InputError(f"{what}: cannot interpret coefficient {raw!r}") from None
    if not np.isfinite(val):
        raise InputError(f"{what}: non-finite coefficient")
    return val


@dataclass(frozen=True, eq=False)
class Piece:
    """One piece of a cell: a width and two coefficients."""

    width: float
    eps: Any
    mu: Any

    def __post_init__(self):
        w = float(self.width)
        if not np.isfinite(w) or w < 0:
            raise InputError(f"piece width must be non-negative, got {self.width!r}")
        object.__setattr__(self, "width", w)
        object.__setattr__(self, "eps", _coerce_coef(self.eps, "eps"))
        object.__setattr__(self, "mu", _coerce_coef(self.mu, "mu"))

    @property
    def is_constant(self) -> bool:
        return not isinstance(self.eps, Sampled) and not isinstance(self.mu, Sampled)

    def key(self):
        return (self.width, _coef_key(self.eps), _coef_key(self.mu))

    def eps_at(self, s):
        """Permittivity at local coordinate ``s`` in ``[0, width]``."""
        return _coef_eval(self.eps, np.asarray(s) / self.width)

    def mu_at(self, s):
        return _coef_eval(self.mu, np.asarray(s) / self.width)

    def restrict(self, a: float, b: float) -> "Piece":
        """Sub-piece on local coordinates ``[a, b]``."""
        fa, fb = a / self.width, b / self.width
        return Piece(b - a, _coef_restrict(self.eps, fa, fb), _coef_restrict(self.mu, fa, fb))

    def reversed(self) -> "Piece":
        return Piece(self.width, _coef_reverse(self.eps), _coef_reverse(self.mu))


class _PieceList:
    """Shared behaviour of objects built from a sequence of pieces."""

    pieces: tuple

    @property
    def breakpoints(self) -> np.ndarray:
        """Piece boundaries measured from the left end, including both ends."""
        return np.concatenate(([0.0], np.cumsum([pc.width for pc in self.pieces])))

    @property
    def length(self) -> float:
        return float(sum(pc.width for pc in self.pieces))

    @property
    def is_layered(self) -> bool:
        return all(pc.is_constant for pc in self.pieces)

    def _locate(self, x):
        x = np.asarray(x, dtype=float)
        bp = self.breakpoints
        idx = np.searchsorted(bp, x, side="right") - 1
        idx = np.clip(idx, 0, len(self.pieces) - 1)
        return idx, x - bp[idx]

    def _evaluate(self, x, attr):
        idx, s = self._locate(x)
        out = np.empty(np.shape(s))
        for i, pc in enumerate(self.pieces):
            m = idx == i
            if np.any(m):
                out[m] = getattr(pc, attr)(s[m])
        return out if out.ndim else float(out)

    def key(self):
        return tuple(pc.key() for pc in self.pieces)

    def __eq__(self, other):
        return type(self) is type(other) and self.key() == other.key()

    def __hash__(self):
        return hash((type(self).__name__, self.key()))


def _as_pieces(pieces: Iterable) -> tuple:
    out = []
    for pc in pieces:
        if isinstance(pc, Piece):
            out.append(pc)
        elif isinstance(pc, dict):
            try:
                out.append(Piece(pc["w"], pc["eps"], pc.get("mu", 1.0)))
            except KeyError as exc:
                raise InputError(f"layer is missing field {exc}") from None
        else:
            out.append(Piece(*pc))
    return tuple(pc for pc in out if pc.width > 0)


@dataclass(frozen=True, eq=False)
class MediumProfile(_PieceList):
    """Periodic medium given by its pieces on one unit cell.

    Parameters
    ----------
    pieces : sequence of Piece, dict or tuple
        Pieces in order of increasing ``x``.  Widths must sum to one and
        both coefficients must be strictly positive.
    label : str, optional
        Free-form name carried into output metadata.

    Examples
    --------
    >>> p = layered([(0.42, 3.8, 1.0), (0.58, 1.0, 1.0)])
    >>> p.eps(0.1), p.eps(0.5)
    (3.8, 1.0)
    """

    pieces: tuple
    label: str = field(default="", compare=False)

    def __post_init__(self):
        pieces = _as_pieces(self.pieces)
        if not pieces:
            raise InputError("a medium needs at least one piece of positive width")
        total = sum(pc.width for pc in pieces)
        if abs(total - 1.0) > _WIDTH_TOL * max(1, len(pieces)):
            raise InputError(f"piece widths must sum to 1, got {total!r}")
        for pc in pieces:
            if _coef_inf(pc.eps) <= 0 or _coef_inf(pc.mu) <= 0:
                raise InputError("eps and mu must be strictly positive")
        object.__setattr__(self, "pieces", pieces)

    def eps(self, x):
        """Permittivity at ``x`` (any real, reduced modulo one)."""
        return self._evaluate(np.mod(x, 1.0), "eps_at")

    def mu(self, x):
        return self._evaluate(np.mod(x, 1.0), "mu_at")

    @property
    def eps_sup(self) -> float:
        return max(_coef_sup(pc.eps) for pc in self.pieces)

    @property
    def mu_sup(self) -> float:
        return max(_coef_sup(pc.mu) for pc in self.pieces)

    @property
    def optical_length(self) -> float:
        """Upper estimate of ``int sqrt(eps mu) dx`` over one cell."""
        return float(sum(pc.width * np.sqrt(_coef_sup(pc.eps) * _coef_sup(pc.mu)) for pc in self.pieces))

    def __repr__(self):
        desc = ", ".join(
            f"({pc.width:.6g}, {_fmt_coef(pc.eps)}, {_fmt_coef(pc.mu)})" for pc in self.pieces
        )
        lab = f" {self.label!r}" if self.label else ""
        return f"MediumProfile{lab}[{desc}]"


def _fmt_coef(c):
    if isinstance(c, Sampled):
        return f"sampled[{c.v.size}]"
    return f"{c:.6g}"


@dataclass(frozen=True, eq=False)
class PerturbationProfile(_PieceList):
    """Signed perturbation pair ``(eps_tilde, mu_tilde)`` on one cell.

    The profile is rescaled on construction so that
    ``sup|mu_tilde| + sup|eps_tilde| == 1``; the factor that was applied is
    kept in ``scale``.  An identically zero perturbation is kept as is.
    """

    pieces: tuple
    scale: float = 1.0

    def __post_init__(self):
        pieces = _as_pieces(self.pieces)
        if not pieces:
            raise InputError("a perturbation needs at least one piece")
        total = sum(pc.width for pc in pieces)
        if abs(total - 1.0) > _WIDTH_TOL * max(1, len(pieces)):
            raise InputError(f"perturbation widths must sum to 1, got {total!r}")
        norm = max(_coef_abs_sup(pc.eps) for pc in pieces) + max(_coef_abs_sup(pc.mu) for pc in pieces)
        scale = 1.0
        if norm > 0 and abs(norm - 1.0) > 1e-14:
            scale = 1.0 / norm
            pieces = tuple(Piece(pc.width, _coef_scale(pc.eps, scale), _coef_scale(pc.mu, scale)) for pc in pieces)
        object.__setattr__(self, "pieces", pieces)
        object.__setattr__(self, "scale", scale)

    def eps(self, x):
        return self._evaluate(np.mod(x, 1.0), "eps_at")

    def mu(self, x):
        return self._evaluate(np.mod(x, 1.0), "mu_at")

    @property
    def is_zero(self) -> bool:
        return all(_coef_abs_sup(pc.eps) == 0 and _coef_abs_sup(pc.mu) == 0 for pc in self.pieces)


@dataclass(frozen=True, eq=False)
class DefectSpec(_PieceList):
    """Finite slab occupying ``[d1, d2]`` between two semi-infinite crystals.

    An empty defect (``d1 == d2``, no pieces) glues the crystals directly.
    """

    d1: float
    d2: float
    pieces: tuple = ()

    def __post_init__(self):
        d1, d2 = float(self.d1), float(self.d2)
        if not (np.isfinite(d1) and np.isfinite(d2)) or d2 < d1:
            raise InputError("defect needs finite d1 <= d2")
        pieces = _as_pieces(self.pieces)
        total = sum(pc.width for pc in pieces)
        if abs(total - (d2 - d1)) > _WIDTH_TOL * max(1.0, d2 - d1) * max(1, len(pieces)):
            raise InputError(f"defect pieces span {total!r}, expected d2 - d1 = {d2 - d1!r}")
        for pc in pieces:
            if _coef_inf(pc.eps) <= 0 or _coef_inf(pc.mu) <= 0:
                raise InputError("defect eps and mu must be strictly positive")
        object.__setattr__(self, "d1", d1)
        object.__setattr__(self, "d2", d2)
        object.__setattr__(self, "pieces", pieces)

    @property
    def is_empty(self) -> bool:
        return not self.pieces

    @property
    def eps_sup(self) -> float:
        return max((_coef_sup(pc.eps) for pc in self.pieces), default=0.0)

    @property
    def mu_sup(self) -> float:
        return max((_coef_sup(pc.mu) for pc in self.pieces), default=0.0)

    def eps(self, x):
        return self._evaluate(np.asarray(x, dtype=float) - self.d1, "eps_at")

    def mu(self, x):
        return self._evaluate(np.asarray(x, dtype=float) - self.d1, "mu_at")

    def key(self):
        return (self.d1, self.d2) + super().key()


@dataclass(frozen=True, eq=False)
class FiniteStructure:
    """Truncated interface structure embedded in vacuum.

    The left crystal fills ``[N1, 0]`` and the right crystal ``[0, N2]``;
    outside ``[N1, N2]`` the medium is vacuum (``eps = mu = 1``).
    """

    left: MediumProfile
    right: MediumProfile
    n1: int
    n2: int

    def __post_init__(self):
        for name in ("n1", "n2"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v:
                raise InputError(f"{name} must be an integer")
            object.__setattr__(self, name, int(v))
        if self.n1 > 0 or self.n2 < 0:
            raise InputError("need N1 <= 0 <= N2")

    def key(self):
        return (self.left.key(), self.right.key(), self.n1, self.n2)

    def __eq__(self, other):
        return isinstance(other, FiniteStructure) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())


def homogeneous(eps: float = 1.0, mu: float = 1.0, label: str = "") -> MediumProfile:
    """Constant medium written as a single piece."""
    return MediumProfile((Piece(1.0, eps, mu),), label=label)


def layered(layers: Sequence, label: str = "") -> MediumProfile:
    """Build a layered cell from ``(width, eps, mu)`` triples.

    The last width is adjusted by at most rounding error so that widths add
    to exactly one.
    """
    layers = [tuple(lay) for lay in layers]
    widths = [float(lay[0]) for lay in layers]
    total = sum(widths)
    if abs(total - 1.0) <= 1e-9:
        widths[-1] = 1.0 - sum(widths[:-1])
    pieces = [Piece(w, lay[1], lay[2] if len(lay) > 2 else 1.0) for w, lay in zip(widths, layers)]
    return MediumProfile(tuple(pieces), label=label)


def _split_at(pieces: Sequence[Piece], cuts: np.ndarray) -> list:
    """Refine ``pieces`` so that every position in ``cuts`` is a boundary."""
    out = []
    start = 0.0
    for pc in pieces:
        stop = start + pc.width
        inner = [c - start for c in cuts if start + _SNAP < c < stop - _SNAP]
        edges = [0.0] + inner + [pc.width]
        for a, b in zip(edges[:-1], edges[1:]):
            out.append(pc if (a == 0.0 and b == pc.width) else pc.restrict(a, b))
        start = stop
    return out


def shift_origin(p: MediumProfile, x0: float) -> MediumProfile:
    """Translate the cell so that the new profile is ``x -> p(x + x0)``.

    Pieces are cut at the new origin; constant pieces stay exact.

    Examples
    --------
    >>> q = shift_origin(layered([(0.42, 3.8, 1.0), (0.58, 1.0, 1.0)]), 0.21)
    >>> [round(pc.width, 2) for pc in q.pieces]
    [0.21, 0.58, 0.21]
    """
    x0 = float(np.mod(x0, 1.0))
    if x0 < _SNAP or 1.0 - x0 < _SNAP:
        return p
    refined = _split_at(p.pieces, np.array([x0]))
    bp = np.concatenate(([0.0], np.cumsum([pc.width for pc in refined])))
    i = int(np.argmin(np.abs(bp - x0)))
    pieces = refined[i:] + refined[:i]
    return MediumProfile(tuple(pieces), label=p.label)


def apply_perturbation(p: MediumProfile, q: PerturbationProfile, delta: float) -> MediumProfile:
    """Pointwise sum ``(eps + delta eps_tilde, mu + delta mu_tilde)``.

    Raises
    ------
    InputError
        If the perturbed coefficients are not strictly positive.
    """
    delta = float(delta)
    if delta == 0.0:
        return p
    cuts = np.unique(np.concatenate((p.breakpoints[1:-1], q.breakpoints[1:-1])))
    a = _split_at(p.pieces, cuts)
    b = _split_at(q.pieces, cuts)
    if len(a) != len(b):
        # widths that differ only by rounding can create a sliver on one side
        a = [pc for pc in a if pc.width > 1e-12]
        b = [pc for pc in b if pc.width > 1e-12]
    if len(a) != len(b):
        raise InputError("could not align medium and perturbation pieces")
    pieces = []
    for pa, pb in zip(a, b):
        eps = _coef_sum(pa.eps, pb.eps, delta)
        mu = _coef_sum(pa.mu, pb.mu, delta)
        if _coef_inf(eps) <= 0 or _coef_inf(mu) <= 0:
            raise InputError(f"perturbation with delta={delta:g} makes a coefficient non-positive")
        pieces.append(Piece(pa.width, eps, mu))
    return MediumProfile(tuple(pieces), label=p.label)


def is_inversion_symmetric(p: MediumProfile, tol: float = 1e-10) -> bool:
    """True when ``eps(x) = eps(-x)`` and ``mu(x) = mu(-x)`` up to ``tol``.

    With period one this is the same as symmetry about ``x = 1/2``.  The
    check probes several interior points of every interval of the common
    refinement of the breakpoints and their mirror images.
    """
    bp = p.breakpoints
    cuts = np.unique(np.concatenate((bp, 1.0 - bp)))
    fr = np.array([0.13, 0.37, 0.5, 0.71, 0.94])
    a, b = cuts[:-1], cuts[1:]
    keep = (b - a) > 1e-12
    x = (a[keep, None] + fr[None, :] * (b - a)[keep, None]).ravel()
    scale_e = max(1.0, p.eps_sup)
    scale_m = max(1.0, p.mu_sup)
    de = np.max(np.abs(p.eps(x) - p.eps(1.0 - x)))
    dm = np.max(np.abs(p.mu(x) - p.mu(1.0 - x)))
    return bool(de <= tol * scale_e and dm <= tol * scale_m)


# --------------------------------------------------------------------------
# JSON structure files


def _load_json(src) -> dict:
    if isinstance(src, dict):
        return src
    path = Path(src)
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InputError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None


def parse_structure(src) -> MediumProfile:
    """Read a structure from a JSON file path or an already parsed dict.

    The expected layout is::

        {"layers": [{"w": 0.42, "eps": 3.8, "mu": 1.0}, ...],
         "origin_shift": 0.0, "label": "..."}

    ``eps`` and ``mu`` may be numbers or ``{"grid": [...]}`` sample tables.
    A non-zero ``origin_shift`` returns ``x -> p(x + origin_shift)``.
    """
    obj = _load_json(src)
    if "layers" not in obj:
        raise InputError("structure needs a 'layers' list")
    label = str(obj.get("label", ""))
    p = MediumProfile(_as_pieces(obj["layers"]), label=label)
    shift = obj.get("origin_shift", 0.0)
    if shift:
        p = shift_origin(p, float(shift))
    return p


def parse_perturbation(src) -> PerturbationProfile:
    """Read ``{"tilde_layers": [...]}``; the result is normalised."""
    obj = _load_json(src)
    key = "tilde_layers" if "tilde_layers" in obj else "layers"
    if key not in obj:
        raise InputError("perturbation needs a 'tilde_layers' list")
    pieces = []
    for lay in obj[key]:
        try:
            pieces.append(Piece(lay["w"], lay.get("eps", 0.0), lay.get("mu", 0.0)))
        except KeyError as exc:
            raise InputError(f"perturbation layer is missing field {exc}") from None
    return PerturbationProfile(tuple(pieces))


def parse_defect(src) -> DefectSpec:
    """Read ``{"d1": ..., "d2": ..., "layers": [...]}``."""
    obj = _load_json(src)
    try:
        d1, d2 = float(obj["d1"]), float(obj["d2"])
    except KeyError as exc:
        raise InputError(f"defect is missing field {exc}") from None
    return DefectSpec(d1, d2, _as_pieces(obj.get("layers", [])))


def _coef_to_json(c):
    if isinstance(c, Sampled):
        out = {"grid": c.v.tolist()}
        if not np.allclose(c.t, np.linspace(0, 1, c.t.size), rtol=0, atol=1e-15):
            out["nodes"] = c.t.tolist()
        return out
    return float(c)


def structure_to_dict(p: MediumProfile) -> dict:
    """Inverse of :func:`parse_structure` (origin shifts are already applied)."""
    out = {"layers": [{"w": pc.width, "eps": _coef_to_json(pc.eps), "mu": _coef_to_json(pc.mu)} for pc in p.pieces]}
    if p.label:
        out["label"] = p.label
    return out


def load_bundled(name: str) -> MediumProfile:
    """Load one of the structures shipped in ``topoband/data``.

    ``name`` is the file stem, for example ``"bilayer_left"``.
    """
    ref = resources.files("topoband").joinpath("data").joinpath(f"{name}.json")
    if not ref.is_file():
        raise InputError(f"no bundled structure named {name!r}")
    return parse_structure(json.loads(ref.read_text()))
