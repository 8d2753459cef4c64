"""
Command-line front end.

Every subcommand reads JSON structure files, writes CSV tables and a
``summary.json`` into ``--out`` and exits with 0 on success, 2 on invalid
input and 3 on a numerical failure (after writing ``diagnostics.json``).

    topoband bands --structure left.json --emax 300 --out run/
    topoband interface --left left.json --right right.json --out run/
    topoband resonance --left left.json --right right.json --sizes 2,4,8,16

A structure argument that is not an existing file is looked up among the
bundled examples (``bilayer_left``, ``bilayer_right``, ``dirac_trilayer``;
``odd_step`` for ``--perturbation``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import input_hash, write_csv, write_json
from .errors import InputError, NumericalError, PreconditionError
from .medium import (
    FiniteStructure,
    MediumProfile,
    is_inversion_symmetric,
    load_bundled,
    parse_defect,
    parse_perturbation,
    parse_structure,
    structure_to_dict,
)

logger = logging.getLogger("topoband")

HELP = {
    "bands": "band edges and dispersion curves",
    "dirac": "band crossings and their slopes",
    "zak": "Zak phases and edge parities",
    "index": "bulk index of each gap",
    "interface": "interface modes between two crystals",
    "defect": "interface modes with a defect at the junction",
    "perturb": "gap opening at a crossing and the resulting mode",
    "resonance": "complex resonances of finite truncations",
    "transmit": "transmission through finite truncations",
}

COMMANDS = ("bands", "dirac", "zak", "index", "interface", "defect", "perturb", "resonance", "transmit")


# --------------------------------------------------------------------------
# helpers


def _structure(arg, flag) -> MediumProfile:
    if arg is None:
        raise InputError(f"{flag} is required")
    if Path(arg).is_file():
        return parse_structure(arg)
    try:
        return load_bundled(str(arg))
    except InputError:
        raise InputError(f"{flag}: no such file or bundled structure: {arg}") from None


def _bundled_json(arg):
    # files win; otherwise fall back to a shipped example of the same stem
    if Path(arg).is_file():
        return arg
    ref = resources.files("topoband").joinpath("data").joinpath(f"{arg}.json")
    return json.loads(ref.read_text()) if ref.is_file() else arg


def _threads() -> int:
    raw = os.environ.get("TOPOBAND_THREADS")
    if raw is None:
        return min(8, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"TOPOBAND_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise InputError("TOPOBAND_THREADS must be at least 1")
    return n


def _pmap(fn, items):
    """Ordered parallel map capped by ``TOPOBAND_THREADS``."""
    items = list(items)
    n = min(_threads(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def _sizes(raw) -> list:
    try:
        out = [int(s) for s in str(raw).split(",") if s.strip()]
    except ValueError:
        raise InputError(f"--sizes must be a comma-separated list of integers, got {raw!r}") from None
    if not out or any(n < 1 for n in out):
        raise InputError("--sizes needs positive integers")
    return out


def _emax(args, *profiles) -> float:
    if args.emax is not None:
        if not args.emax > 0:
            raise InputError("--emax must be positive")
        return float(args.emax)
    from .spectrum import band_structure

    return min(band_structure(p, 8).e_max for p in profiles)


def _digest(args, *objs):
    return input_hash(args.command, *[structure_to_dict(o) if isinstance(o, MediumProfile) else o for o in objs])


# --------------------------------------------------------------------------
# commands


def cmd_bands(args, out: Path) -> dict:
    from .spectrum import band_edges, dispersion

    p = _structure(args.structure, "--structure")
    e_max = _emax(args, p)
    nk = args.nk or 64
    bs = band_edges(p, e_max)
    h = _digest(args, p, e_max, nk)
    k = np.linspace(0.0, np.pi, nk)
    curves = _pmap(lambda b: dispersion(p, b.index, k), bs.bands)
    rows = [(c.j, kk, EE) for c in curves for kk, EE in zip(c.k, c.E)]
    write_csv(out / "bands.csv", ("j", "k", "E"), rows, h)
    write_csv(out / "edges.csv", ("j", "E_minus", "E_plus", "kstar"),
              [(b.index, b.lower.E, b.upper.E, b.upper.k_star) for b in bs.bands], h)
    return {
        "e_max": e_max,
        "bands": [[b.lower.E, b.upper.E] for b in bs.bands],
        "gaps": [{"j": g.index, "interval": list(g.interval)} for g in bs.gaps],
        "dispersion_residual": max((c.residual for c in curves), default=0.0),
    }


def cmd_dirac(args, out: Path) -> dict:
    from .spectrum import dirac_points

    p = _structure(args.structure, "--structure")
    e_max = _emax(args, p)
    dps = dirac_points(p, e_max)
    h = _digest(args, p, e_max)
    write_csv(out / "dirac.csv", ("kstar", "Estar", "D2", "slope"), [(d.k_star, d.E, d.D2, d.slope) for d in dps], h)
    return {"e_max": e_max, "dirac": [{"E": d.E, "kstar": d.k_star, "j": d.j, "slope": d.slope, "certified": d.certified} for d in dps]}


def _isolated_bands(p, e_max, band):
    from .spectrum import band_edges

    bs = band_edges(p, e_max)
    if band is not None:
        return bs, [bs.band(band)]
    return bs, list(bs.bands)


def cmd_zak(args, out: Path) -> dict:
    from .bloch import edge_parity, zak_parity, zak_wilson

    p = _structure(args.structure, "--structure")
    e_max = _emax(args, p)
    N = args.nk or 256
    bs, bands = _isolated_bands(p, e_max, args.band)
    bands = [b for b in bands if b.isolated]
    sym = is_inversion_symmetric(p)
    h = _digest(args, p, e_max, N)
    wil = _pmap(lambda b: zak_wilson(p, b.index, N), bands)
    zrows, prow, summ = [], [], []
    for b, z in zip(bands, wil):
        zrows.append((b.index, z.theta, "wilson", z.N))
        entry = {"j": b.index, "wilson": z.theta}
        if sym:
            zp = zak_parity(p, b.index)
            zrows.append((b.index, zp, "parity", 0))
            entry["parity"] = zp
            for which in ("lower", "upper"):
                ep = edge_parity(p, b.index, which)
                prow.append((b.index, ep.k, ep.parity, ep.witness))
        summ.append(entry)
    write_csv(out / "zak.csv", ("j", "theta", "method", "N"), zrows, h)
    if sym:
        write_csv(out / "parity.csv", ("j", "edge_k", "parity", "witness"), prow, h)
    return {"e_max": e_max, "symmetric": sym, "theta": summ}


def cmd_index(args, out: Path) -> dict:
    from .bloch import bulk_index
    from .spectrum import band_edges

    p = _structure(args.structure, "--structure")
    if not is_inversion_symmetric(p):
        raise PreconditionError("bulk indices need an inversion-symmetric cell")
    e_max = _emax(args, p)
    bs = band_edges(p, e_max)
    gaps = [g for g in bs.gaps if args.band is None or g.index == args.band]
    res = _pmap(lambda g: bulk_index(p, g.index), gaps)
    h = _digest(args, p, e_max)
    write_csv(out / "bulk_index.csv", ("j", "gamma", "ell", "zak_sum"),
              [(g.index, r.gamma, r.ell, r.theta_sum) for g, r in zip(gaps, res)], h)
    return {"e_max": e_max, "gamma": [{"j": g.index, "gamma": r.gamma, "interval": list(g.interval)} for g, r in zip(gaps, res)]}


def _mode_rows(modes):
    return [(m.E, m.omega, m.decay_left, m.decay_right, m.residual) for m in modes]


def _mode_summary(modes):
    return [{"E": m.E, "omega": m.omega, "decay_left": m.decay_left, "decay_right": m.decay_right,
             "gap": [m.gap.lo, m.gap.hi] if m.gap else None} for m in modes]


def cmd_interface(args, out: Path) -> dict:
    from .interface import _xi_pair, common_gap, find_interface_modes

    p1 = _structure(args.left, "--left")
    p2 = _structure(args.right, "--right")
    e_max = _emax(args, p1, p2)
    gaps = common_gap(p1, p2, e_max)
    modes = find_interface_modes(p1, p2, e_max)
    h = _digest(args, p1, p2, e_max)
    rows = []
    for g in gaps:
        pad = 1e-9 * (g.hi - g.lo)
        for E in np.linspace(g.lo + pad, g.hi - pad, 400):
            xl = _xi_pair(p1, E)[0]
            xr = _xi_pair(p2, E)[1]
            rows.append((E, xl, xr, xl - xr))
    write_csv(out / "impedance.csv", ("E", "xi_L_1", "xi_R_2", "xi_diff"), rows, h)
    write_csv(out / "interface_modes.csv", ("E", "omega", "decayL", "decayR", "residual"), _mode_rows(modes), h)
    return {
        "e_max": e_max,
        "common_gaps": [{"m1": g.m1, "m2": g.m2, "interval": [g.lo, g.hi]} for g in gaps],
        "modes": _mode_summary(modes),
        "omega": [m.omega for m in modes],
    }


def cmd_defect(args, out: Path) -> dict:
    from .interface import _defect_h, common_gap, defect_mode_search, stability_bound, stability_value

    p1 = _structure(args.left, "--left")
    p2 = _structure(args.right, "--right")
    if args.defect is None:
        raise InputError("--defect is required")
    d = parse_defect(args.defect)
    e_max = _emax(args, p1, p2)
    gaps = common_gap(p1, p2, e_max)
    modes = defect_mode_search(p1, p2, d, e_max)
    h = _digest(args, p1, p2, e_max, {"d1": d.d1, "d2": d.d2, "layers": [[pc.width, pc.key()] for pc in d.pieces]})
    rows = []
    hf = _defect_h(p1, p2, d)
    for g in gaps:
        pad = 1e-9 * (g.hi - g.lo)
        r2 = r1 = None
        for E in np.linspace(g.lo + pad, g.hi - pad, 400):
            val, r2, r1 = hf(E, r2, r1)
            rows.append((E, val))
    write_csv(out / "defect_scan.csv", ("E", "h"), rows, h)
    write_csv(out / "interface_modes.csv", ("E", "omega", "decayL", "decayR", "residual"), _mode_rows(modes), h)
    return {
        "e_max": e_max,
        "stability": [{"interval": [g.lo, g.hi], "value": stability_value(d, g), "guaranteed": stability_bound(d, g)} for g in gaps],
        "modes": _mode_summary(modes),
        "omega": [m.omega for m in modes],
    }


def cmd_perturb(args, out: Path) -> dict:
    from .perturbation import (check_assumption1, dirac_context, dirac_interface_mode, gap_prediction,
                               hessian_coeffs, measured_gap)
    from .spectrum import dirac_points

    p = _structure(args.structure, "--structure")
    if args.perturbation is None:
        raise InputError("--perturbation is required")
    q = parse_perturbation(_bundled_json(args.perturbation))
    delta = 1e-2 if args.delta is None else float(args.delta)
    if not delta > 0:
        raise InputError("--delta must be positive")
    e_max = _emax(args, p)
    dps = [d for d in dirac_points(p, e_max) if d.certified]
    if args.band is not None:
        dps = [d for d in dps if d.j == args.band]
    if not dps:
        raise PreconditionError("no certified Dirac point below --emax")
    dp = dps[0]
    ctx = dirac_context(p, dp, q)
    hc = hessian_coeffs(ctx)
    a1 = check_assumption1(hc)
    gp = gap_prediction(hc)
    h = _digest(args, p, structure_to_dict(p), [pc.key() for pc in q.pieces], delta, e_max)
    deltas = [delta, delta / 2, delta / 4]
    win = 3 * max(abs(gp.eta_minus), abs(gp.eta_plus))
    gap_rows, mode_rows = [], []
    for dl in deltas:
        m = measured_gap(p, q, dl, dp.E, win * dl)
        pr = gp.predicted_edges(dl)
        gap_rows.append((dl, m[0], m[1], pr[0], pr[1]))
    modes = []
    if a1.ok:
        for dl in deltas:
            mode = dirac_interface_mode(p, q, dl, dp)
            # xi_R = xi_L measured as the sine of the angle between the two
            # decaying directions; finite even where both impedances blow up
            mode_rows.append((dl, mode.E, mode.collinearity))
            modes.append(mode)
    write_csv(out / "gap_open.csv", ("delta", "edge_minus", "edge_plus", "predicted_minus", "predicted_plus"), gap_rows, h)
    write_csv(out / "dirac_mode.csv", ("delta", "E_root", "xi_residual"), mode_rows, h)
    return {
        "dirac": {"E": dp.E, "kstar": dp.k_star, "j": dp.j},
        "a": [hc.a1, hc.a2, hc.a3],
        "eta": [gp.eta_minus, gp.eta_plus],
        "assumption": {"ok": a1.ok, "branch": a1.branch},
        "modes": [{"delta": r[0], "E": r[1]} for r in mode_rows],
    }


def _interface_omegas(p1, p2, e_max):
    from .interface import find_interface_modes

    return [m.omega for m in find_interface_modes(p1, p2, e_max)]


def cmd_resonance(args, out: Path) -> dict:
    from .resonance import decay_fit, resonance_family

    p1 = _structure(args.left, "--left")
    p2 = _structure(args.right, "--right")
    sizes = _sizes(args.sizes or "2,4,8,16")
    e_max = _emax(args, p1, p2)
    winfs = _interface_omegas(p1, p2, e_max)
    if not winfs:
        raise NumericalError("no interface mode to seed the resonance search")
    h = _digest(args, p1, p2, e_max, sizes)
    rows, summ = [], []
    with ThreadPoolExecutor(max_workers=max(1, min(_threads(), len(sizes)))) as ex:
        for w in winfs:
            res = resonance_family(p1, p2, sizes, w, executor=ex)
            rows.extend((r.N1, r.N2, r.omega.real, r.omega.imag, r.residual) for r in res)
            entry = {"omega_inf": w, "resonances": [{"N": r.N2, "omega": r.omega, "offset": r.offset} for r in res]}
            if len(set(sizes)) >= 3:
                fit = decay_fit(res, w)
                entry["decay"] = {"alpha": fit.alpha, "C": fit.C, "r_squared": fit.r_squared}
            summ.append(entry)
    write_csv(out / "resonances.csv", ("N1", "N2", "re_omega", "im_omega", "residual"), rows, h)
    return {"omega_inf": winfs, "families": summ}


def cmd_transmit(args, out: Path) -> dict:
    from .resonance import transmission

    p1 = _structure(args.left, "--left")
    p2 = _structure(args.right, "--right")
    sizes = _sizes(args.sizes or "4")
    lo = 15.0 if args.omega_min is None else args.omega_min
    hi = 16.5 if args.omega_max is None else args.omega_max
    n = 1501 if args.omega_steps is None else args.omega_steps
    if not (0 < lo < hi) or n < 2:
        raise InputError("need 0 < --omega-min < --omega-max and --omega-steps >= 2")
    w = np.linspace(lo, hi, n)
    h = _digest(args, p1, p2, sizes, lo, hi, n)
    summ = []
    for N in sizes:
        fs = FiniteStructure(p1, p2, -N, N)
        res = _pmap(lambda x: transmission(fs, x), w)
        name = "transmission.csv" if len(sizes) == 1 else f"transmission_N{N}.csv"
        write_csv(out / name, ("omega", "abs_t", "abs_r", "re_t", "im_t"),
                  [(r.omega, abs(r.t), abs(r.r), r.t.real, r.t.imag) for r in res], h)
        at = np.array([abs(r.t) for r in res])
        i = int(np.argmax(at))
        summ.append({"N": N, "file": name, "max_abs_t": float(at[i]), "omega_at_max": float(w[i]),
                     "max_flux_defect": max(r.flux_defect for r in res)})
    return {"sizes": sizes, "transmission": summ}


HANDLERS = {
    "bands": cmd_bands, "dirac": cmd_dirac, "zak": cmd_zak, "index": cmd_index,
    "interface": cmd_interface, "defect": cmd_defect, "perturb": cmd_perturb,
    "resonance": cmd_resonance, "transmit": cmd_transmit,
}


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="topoband", description="Band topology and interface modes of 1D periodic media.")
    ap.add_argument("--version", action="version", version=f"topoband {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=HELP[name])
        sp.add_argument("--structure", help="structure JSON (file or bundled name)")
        sp.add_argument("--left", help="crystal on x < 0")
        sp.add_argument("--right", help="crystal on x > 0")
        sp.add_argument("--defect", help="defect JSON inserted at the junction")
        sp.add_argument("--perturbation", help="perturbation JSON")
        sp.add_argument("--emax", type=float, help="upper energy of the scan")
        sp.add_argument("--nk", type=int, help="quasi-momentum samples per band")
        sp.add_argument("--band", type=int, help="band index, from 1")
        sp.add_argument("--delta", type=float, help="perturbation strength")
        sp.add_argument("--sizes", help="comma-separated truncation sizes")
        sp.add_argument("--omega-min", dest="omega_min", type=float, help="lower frequency")
        sp.add_argument("--omega-max", dest="omega_max", type=float, help="upper frequency")
        sp.add_argument("--omega-steps", dest="omega_steps", type=int, help="frequency samples")
        sp.add_argument("--out", default=".", help="output directory (default: .)")
        sp.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    try:
        if args.nk is not None and args.nk < 2:
            raise InputError("--nk must be at least 2")
        summary = HANDLERS[args.command](args, out)
    except InputError as exc:
        print(f"topoband: error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, ArithmeticError) as exc:
        print(f"topoband: numerical failure: {exc}", file=sys.stderr)
        write_json(out / "diagnostics.json", {
            "command": args.command,
            "error": type(exc).__name__,
            "message": str(exc),
            "traceback": traceback.format_exc().splitlines(),
        })
        return 3
    summary = {"command": args.command, "version": __version__, **summary}
    write_json(out / "summary.json", summary)
    return 0


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
