# Opening a gap at a band crossing, and the mode between +delta and -delta crystals.
import numpy as np

import topoband as tb
from topoband.perturbation import (
    check_assumption1,
    dirac_context,
    dirac_interface_mode,
    gap_prediction,
    hessian_coeffs,
    measured_gap,
)

p = tb.load_bundled("dirac_trilayer")
q = tb.parse_perturbation({"tilde_layers": [{"w": 0.5, "eps": 1.0, "mu": 0.0},
                                            {"w": 0.5, "eps": -1.0, "mu": 0.0}]})
E_star = (1.5 * np.pi) ** 2

hc = hessian_coeffs(dirac_context(p, E_star, q))
print(f"a1 = {hc.a1:.6f}, a2 = {hc.a2:.2e}, a3 = {hc.a3:.6f}")
print(check_assumption1(hc))
gp = gap_prediction(hc)
print(f"edges move as E* + eta delta with eta = {gp.eta_minus:.5f}, {gp.eta_plus:.5f}")

for delta in (1e-2, 5e-3, 2.5e-3):
    lo, hi = measured_gap(p, q, delta, E_star, 3 * gp.eta_plus * delta)
    plo, phi = gp.predicted_edges(delta)
    m = dirac_interface_mode(p, q, delta, dp=E_star)
    print(f"delta {delta:.4f}: gap ({lo:.6f}, {hi:.6f}) predicted ({plo:.6f}, {phi:.6f}); mode at {m.E:.8f}")
