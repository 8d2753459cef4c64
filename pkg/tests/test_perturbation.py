import numpy as np
import pytest

import oracles as O
import topoband as tb
from topoband.errors import PreconditionError
from topoband.interface import find_interface_modes
from topoband.medium import apply_perturbation
from topoband.perturbation import (
    check_assumption1,
    dirac_context,
    dirac_interface_mode,
    gap_prediction,
    hessian_coeffs,
    lambda_expansion,
    measured_gap,
)
from topoband.propagator import floquet_eigen, monodromy

ODD = {"tilde_layers": [{"w": 0.5, "eps": 1.0, "mu": 0.0}, {"w": 0.5, "eps": -1.0, "mu": 0.0}]}
EVEN_MU = {"tilde_layers": [{"w": 0.25, "eps": 0.0, "mu": 1.0}, {"w": 0.5, "eps": 0.0, "mu": -1.0},
                            {"w": 0.25, "eps": 0.0, "mu": 1.0}]}


def _perturbed_trilayer(delta):
    """Dirac trilayer plus delta times the odd step, as explicit layers."""
    (d1, e1, _), (d2, e2, _), (d3, e3, _) = O.DIRAC_LAYERS
    return [(d1, e1 + delta, 1.0), (d2 / 2, e2 + delta, 1.0), (d2 / 2, e2 - delta, 1.0), (d3, e3 - delta, 1.0)]


def _oracle_coeffs(E0, h=1e-3, k=1e-3):
    D = lambda E, d: np.trace(O.textbook_monodromy(_perturbed_trilayer(d), E))
    dEE = (D(E0 + h, 0) - 2 * D(E0, 0) + D(E0 - h, 0)) / h**2
    ddd = (D(E0, k) - 2 * D(E0, 0) + D(E0, -k)) / k**2
    dEd = (D(E0 + h, k) - D(E0 + h, -k) - D(E0 - h, k) + D(E0 - h, -k)) / (4 * h * k)
    # the coefficients are the second derivatives themselves (times s = +1 here)
    return dEE, dEd, ddd


@pytest.fixture(scope="module")
def trilayer():
    p = tb.load_bundled("dirac_trilayer")
    q = tb.parse_perturbation(ODD)
    return p, q, hessian_coeffs(dirac_context(p, O.DIRAC_E, q))


def test_coefficients_match_independent_differences(trilayer):
    _, _, hc = trilayer
    a1, a2, a3 = _oracle_coeffs(O.DIRAC_E)
    assert hc.sign == 1
    assert abs(hc.a1 - a1) < 1e-5 * abs(a1)
    assert abs(hc.a3 - a3) < 1e-5 * abs(a3)
    # the odd step against an even cell has no cross term
    assert abs(hc.a2) < 1e-10 and abs(a2) < 1e-6


def test_prediction_matches_measured_gap(trilayer):
    p, q, hc = trilayer
    gp = gap_prediction(hc)
    assert gp.eta_minus < 0 < gp.eta_plus
    # roots of a1 eta^2 + 2 a2 eta + a3
    for eta in (gp.eta_minus, gp.eta_plus):
        assert abs(hc.a1 * eta**2 + 2 * hc.a2 * eta + hc.a3) < 1e-10 * abs(hc.a3)
    errs = []
    for d in (4e-3, 2e-3, 1e-3):
        lo, hi = measured_gap(p, q, d, hc.E_star, 3 * gp.eta_plus * d)
        plo, phi = gp.predicted_edges(d)
        errs.append(max(abs(lo - plo), abs(hi - phi)))
    # second-order remainder: halving delta divides the error by about four
    assert 3.0 < errs[0] / errs[1] < 5.0 and 3.0 < errs[1] / errs[2] < 5.0


def test_lambda_expansion(trilayer):
    p, q, hc = trilayer
    d = 1e-3
    pd = apply_perturbation(p, q, d)
    lam = floquet_eigen(monodromy(pd, hc.E_star)).lam[0]
    approx = lambda_expansion(hc, hc.E_star, d)
    assert abs((1 - approx) - (1 - lam)) < 0.05 * abs(1 - lam)
    with pytest.raises(PreconditionError):
        lambda_expansion(hc, hc.E_star + 10 * gap_prediction(hc).width_rate * d, d)


def test_assumption_holds_for_odd_step(trilayer):
    a = check_assumption1(trilayer[2])
    assert a.ok and a.branch in (1, 2)


def test_homogeneous_crossings():
    p, q = tb.homogeneous(), tb.parse_perturbation(ODD)
    # the first crossing opens; the second has a3 = 0 and stays closed at first order
    h1 = hessian_coeffs(dirac_context(p, np.pi**2, q))
    assert h1.sign == -1 and gap_prediction(h1).width_rate > 0
    h2 = hessian_coeffs(dirac_context(p, 4 * np.pi**2, q))
    assert abs(h2.a3) < 1e-10
    with pytest.raises(PreconditionError):
        gap_prediction(h2)


def test_dirac_mode_matches_generic_solver(trilayer):
    p, q, hc = trilayer
    d = 5e-3
    m = dirac_interface_mode(p, q, d, dp=hc.E_star)
    gen = find_interface_modes(apply_perturbation(p, q, -d), apply_perturbation(p, q, d),
                               gap=gap_prediction(hc).predicted_edges(0.9 * d))
    assert min(abs(g.E - m.E) for g in gen) < 1e-8
    lo, hi = gap_prediction(hc).predicted_edges(d)
    assert lo < m.E < hi


def test_zero_delta_rejected(trilayer):
    p, q, hc = trilayer
    with pytest.raises(PreconditionError):
        dirac_interface_mode(p, q, 0.0, dp=hc.E_star)


def test_mu_perturbation_coefficients():
    p = tb.load_bundled("dirac_trilayer")
    hc = hessian_coeffs(dirac_context(p, O.DIRAC_E, tb.parse_perturbation(EVEN_MU)), check=True)
    # check=True compares with finite differences of the perturbed discriminant
    assert np.isfinite(hc.a3)
