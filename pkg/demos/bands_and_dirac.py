# Band structure of a layered crystal, and band crossings.
import numpy as np

import topoband as tb

p = tb.layered([(0.58, 1.0, 1.0), (0.42, 3.8, 1.0)], label="vacuum/dielectric")
bs = tb.band_structure(p, 6)
for b in bs.bands:
    print(f"band {b.index}: [{b.lower.E:10.4f}, {b.upper.E:10.4f}]")
for g in bs.gaps:
    print(f"gap above band {g.index}: width {g.width:.4f}, edges at k = {g.k_star:.4f}")

# The dispersion relation satisfies 2 cos k = D(E(k)) to rounding.
k = np.linspace(0, np.pi, 9)
curve = tb.dispersion(p, 2, k)
print("band 2:", np.round(curve.E, 4), "residual", curve.residual)

# A homogeneous medium has no gaps: every edge is a crossing at (n pi)^2.
for dp in tb.dirac_points(tb.homogeneous(), 170.0):
    print(f"crossing at E/pi^2 = {dp.E / np.pi**2:.6f}, k* = {dp.k_star:.4f}, slope {dp.slope:.4f}")

# So does a trilayer whose layers all carry a quarter-wave phase at 3 pi / 2.
tri = tb.load_bundled("dirac_trilayer")
print([round(d.E, 6) for d in tb.dirac_points(tri, 40.0)], (1.5 * np.pi) ** 2)
