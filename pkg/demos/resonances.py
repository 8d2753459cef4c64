# Finite truncations: complex resonances and transmission peaks.
import numpy as np

import topoband as tb
from topoband.interface import find_interface_modes
from topoband.medium import FiniteStructure
from topoband.resonance import decay_fit, resonance_family, transmission, transmission_peak

left = tb.load_bundled("bilayer_left")
right = tb.load_bundled("bilayer_right")
w_inf = min((m.omega for m in find_interface_modes(left, right)), key=lambda w: abs(w - 15.68))
print("interface frequency", w_inf)

fam = resonance_family(left, right, (2, 4, 8, 16), w_inf)
for r in fam:
    fs = FiniteStructure(left, right, r.N1, r.N2)
    pk = transmission_peak(fs, r.omega.real, max(0.3, 6 * abs(r.omega.imag)))
    print(f"N = {r.N2:2d}: omega - omega_inf = {r.offset.real:+.6f} {r.offset.imag:+.6f}i,"
          f" |t| peak at {pk.omega:.5f}, half-width {pk.half_width:.2e}")

fit = decay_fit(fam, w_inf)
print(f"|omega_N - omega_inf| ~ {fit.C:.3f} exp(-{fit.alpha:.3f} N), R^2 = {fit.r_squared:.4f}")

# Lossless media conserve flux at every real frequency.
fs = FiniteStructure(left, right, -8, 8)
ws = np.linspace(15.0, 16.5, 7)
print([round(abs(s.t) ** 2 + abs(s.r) ** 2, 12) for s in map(lambda w: transmission(fs, w), ws)])
