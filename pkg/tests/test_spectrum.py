import numpy as np
import pytest

import oracles as O
import topoband as tb
from topoband.errors import InputError
from topoband.spectrum import (
    band_edges,
    band_structure,
    bc_eigenvalues,
    dirac_points,
    dispersion,
    interlacing_check,
)


def _brute_edges(layers, e_max, n=400_000):
    """Sign changes of D -+ 2 on a dense grid, using the textbook product."""
    E = np.linspace(1e-9, e_max, n)
    D = np.array([np.trace(O.textbook_monodromy(layers, e)) for e in E[:: n // 20000]])
    Eg = E[:: n // 20000]
    out = []
    for t in (2, -2):
        s = np.sign(D - t)
        out.extend(0.5 * (Eg[i] + Eg[i + 1]) for i in np.nonzero(s[:-1] != s[1:])[0])
    return np.sort(out)


def test_edges_match_dense_scan():
    bs = band_edges(tb.layered(O.LEFT_LAYERS), 600.0)
    got = np.array([e.E for e in bs.edges if e.E > 0])
    want = _brute_edges(O.LEFT_LAYERS, 600.0)
    assert got.size == want.size
    assert np.allclose(got, want, atol=600.0 / 20000)
    for e in bs.edges:
        assert abs(tb.discriminant(bs.profile, e.E) - e.target) < 1e-9


def test_homogeneous_edges_are_all_crossings():
    bs = band_edges(tb.homogeneous(), 170.0)
    touch = [e.E for e in bs.edges if e.touching]
    assert np.allclose(touch, [(n * np.pi) ** 2 for n in (1, 2, 3, 4)], rtol=1e-10)
    assert not bs.gaps


def test_band_structure_counts_and_gap_lookup():
    p = tb.layered(O.LEFT_LAYERS)
    bs = band_structure(p, 8)
    assert len(bs.bands) >= 8
    g = bs.gap_containing(246.0)
    assert g is not None and g.contains(246.0)
    assert g.k_star in (0.0, np.pi)
    with pytest.raises(InputError):
        bs.band(0)


def test_dirac_trilayer_crossing():
    dps = dirac_points(tb.layered(O.DIRAC_LAYERS), 40.0)
    E = [d.E for d in dps]
    assert any(abs(e - O.DIRAC_E) < 1e-9 for e in E)
    dp = next(d for d in dps if abs(d.E - O.DIRAC_E) < 1e-9)
    assert dp.k_star == 0.0 and dp.certified
    assert np.allclose(tb.monodromy(tb.layered(O.DIRAC_LAYERS), dp.E), np.eye(2), atol=1e-9)


def test_homogeneous_dirac_slopes():
    for dp, n in zip(dirac_points(tb.homogeneous(), 170.0), (1, 2, 3, 4)):
        assert abs(dp.slope - 2 * n * np.pi) < 1e-6 * dp.slope
        assert dp.k_star == (np.pi if n % 2 else 0.0)


def test_dispersion_residual_and_symmetry():
    p = tb.layered(O.RIGHT_LAYERS)
    k = np.linspace(-np.pi, np.pi, 33)
    for j in (1, 2, 3):
        c = dispersion(p, j, k)
        assert c.residual < 1e-9
        assert np.allclose(c.E, c.E[::-1])  # E(k) = E(-k)
        assert np.all(np.diff(c.E[16:]) * (1 if j % 2 else -1) >= -1e-12)
    with pytest.raises(InputError):
        dispersion(p, 1, [4.0])


def test_bc_eigenvalues_homogeneous():
    vals = bc_eigenvalues(tb.homogeneous(), 4)
    n = np.arange(1, 5)
    assert np.allclose(vals["D"], (n * np.pi) ** 2, rtol=1e-10)
    assert np.allclose(vals["N"], ((n - 1) * np.pi) ** 2, rtol=1e-10, atol=1e-12)


def test_interlacing_on_symmetric_cells():
    rng = np.random.default_rng(1)
    for _ in range(4):
        rep = interlacing_check(tb.layered(O.random_symmetric_layers(rng)), 6)
        assert rep.ok, rep.violations


def test_emax_must_be_positive():
    with pytest.raises(InputError):
        band_edges(tb.homogeneous(), 0.0)
