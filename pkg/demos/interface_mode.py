# The interface mode between two bilayer crystals.
import numpy as np

import topoband as tb
from topoband.interface import common_gap, find_interface_modes, impedance

left = tb.load_bundled("bilayer_left")
right = tb.load_bundled("bilayer_right")

for cg in common_gap(left, right, 300.0):
    print(f"common gap ({cg.lo:.4f}, {cg.hi:.4f}) from gaps {cg.m1} and {cg.m2}")

modes = find_interface_modes(left, right)
for m in modes:
    print(f"omega = {m.omega:.6f}  decay per cell: left {m.decay_left:.4f}, right {m.decay_right:.4f}")

m = min(modes, key=lambda m: abs(m.omega - 15.68))
print("xi_L(left) =", impedance(left, "left", m.E), " xi_R(right) =", impedance(right, "right", m.E))

# Field envelope: the peak |psi| in each cell falls off geometrically.
x, psi, _ = m.profile(n_periods=5)
for n in range(-5, 5):
    sel = (x >= n) & (x <= n + 1)
    print(f"cell {n:+d}: max |psi| = {np.max(np.abs(psi[sel])):.3e}")
