import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import topoband as tb
from topoband.errors import InputError
from topoband.medium import (
    DefectSpec,
    FiniteStructure,
    Piece,
    apply_perturbation,
    is_inversion_symmetric,
    parse_defect,
    parse_structure,
    shift_origin,
    structure_to_dict,
)
from topoband.propagator import discriminant


def test_layered_normalises_and_exposes_breakpoints():
    p = tb.layered([(0.3, 2.0, 1.0), (0.7, 1.0, 1.5)])
    assert np.allclose(p.breakpoints, [0.0, 0.3, 1.0])
    assert np.allclose(p.eps([0.1, 0.5]), [2.0, 1.0])
    assert np.allclose(p.mu([0.1, 0.5]), [1.0, 1.5])


@pytest.mark.parametrize("layers", [
    [(0.3, 2.0, 1.0), (0.3, 1.0, 1.0)],  # widths do not add up to one
    [(0.5, -1.0, 1.0), (0.5, 1.0, 1.0)],  # negative eps
    [(1.0, 1.0, 0.0)],                    # zero mu
    [(1.0, np.nan, 1.0)],
])
def test_bad_cells_rejected(layers):
    with pytest.raises(InputError):
        tb.layered(layers)


def test_parse_structure_json_forms(tmp_path):
    doc = {"label": "x", "layers": [{"w": 0.4, "eps": 3.0, "mu": 1.0}, {"w": 0.6, "eps": 1.0, "mu": 1.0}]}
    f = tmp_path / "s.json"
    f.write_text(json.dumps(doc))
    p1 = parse_structure(str(f))
    p2 = parse_structure(doc)
    assert p1 == p2
    assert p1 == parse_structure(structure_to_dict(p1))


def test_parse_structure_errors(tmp_path):
    with pytest.raises(InputError):
        parse_structure({"layers": []})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(InputError):
        parse_structure(str(bad))


@pytest.mark.parametrize("name", ["bilayer_left", "bilayer_right", "dirac_trilayer"])
def test_bundled_structures_load(name):
    p = tb.load_bundled(name)
    assert abs(sum(pc.width for pc in p.pieces) - 1.0) < 1e-12


def test_unknown_bundled_name():
    with pytest.raises(InputError):
        tb.load_bundled("nope")


def test_shift_origin_keeps_discriminant():
    p = tb.load_bundled("bilayer_left")
    for x0 in (0.1, 0.42, 0.9):
        q = shift_origin(p, x0)
        E = np.linspace(1, 300, 17)
        assert np.allclose(discriminant(p, E), discriminant(q, E), atol=1e-10)


def test_inversion_symmetry_detection():
    A = tb.layered([(0.25, 1.3, 1.0), (0.5, 1.0, 1.0), (0.25, 1.3, 1.0)])
    assert is_inversion_symmetric(A)
    assert is_inversion_symmetric(shift_origin(A, 0.5))
    assert not is_inversion_symmetric(tb.load_bundled("bilayer_left"))
    # the example bilayer becomes symmetric once the dielectric is centred
    L = tb.load_bundled("bilayer_left")
    assert is_inversion_symmetric(shift_origin(L, 0.58 + 0.21 - 0.5))


def test_apply_perturbation_adds_tilde_profile():
    p = tb.load_bundled("dirac_trilayer")
    q = tb.parse_perturbation({"tilde_layers": [{"w": 0.5, "eps": 1.0, "mu": 0.0}, {"w": 0.5, "eps": -1.0, "mu": 0.0}]})
    pd = apply_perturbation(p, q, 0.01)
    x = np.array([0.05, 0.3, 0.6, 0.95])
    assert np.allclose(pd.eps(x), p.eps(x) + 0.01 * np.array([1, 1, -1, -1]))
    assert np.allclose(pd.mu(x), p.mu(x))
    assert apply_perturbation(p, q, 0.0) == p


def test_defect_validation():
    d = DefectSpec(0.0, 0.5, [Piece(0.2, 2.0, 1.0), Piece(0.3, 1.0, 1.0)])
    assert d.eps_sup == 2.0 and d.mu_sup == 1.0
    assert np.allclose(d.eps([0.1, 0.4]), [2.0, 1.0])
    assert DefectSpec(1.0, 1.0).is_empty
    with pytest.raises(InputError):
        DefectSpec(0.0, 1.0, [Piece(0.5, 1.0, 1.0)])
    with pytest.raises(InputError):
        DefectSpec(1.0, 0.0)
    assert parse_defect({"d1": 0, "d2": 0.5, "layers": [{"w": 0.5, "eps": 2, "mu": 1}]}).d2 == 0.5


def test_finite_structure_validation():
    L, R = tb.load_bundled("bilayer_left"), tb.load_bundled("bilayer_right")
    assert FiniteStructure(L, R, -2, 3) == FiniteStructure(L, R, -2, 3)
    with pytest.raises(InputError):
        FiniteStructure(L, R, 1, 3)
    with pytest.raises(InputError):
        FiniteStructure(L, R, -1.5, 3)


widths = st.lists(st.floats(0.05, 1.0), min_size=1, max_size=5)


@settings(max_examples=40, deadline=None)
@given(widths, st.floats(0.5, 8.0), st.floats(0.5, 3.0))
def test_json_round_trip(ws, e, m):
    w = np.array(ws) / sum(ws)
    p = tb.layered([(float(a), e * (1 + i), m) for i, a in enumerate(w)])
    assert parse_structure(json.loads(json.dumps(structure_to_dict(p)))) == p
