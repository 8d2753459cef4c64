# Zak phases of an inversion-symmetric cell, two ways, and the bulk index.
import numpy as np

import topoband as tb
from topoband.bloch import edge_parity, zak_parity, zak_wilson

A = tb.layered([(0.25, 1.3, 1.0), (0.5, 1.0, 1.0), (0.25, 1.3, 1.0)])
B = tb.shift_origin(A, 0.5)  # same crystal, origin at the other symmetry centre

for name, p in (("A", A), ("B", B)):
    print(name)
    for j in range(1, 5):
        w = zak_wilson(p, j, N=256, refine=False).theta
        print(f"  band {j}: wilson {w:.6f}  parity {zak_parity(p, j):.6f}")
    for g in tb.band_structure(p, 5).gaps[:4]:
        lo = edge_parity(p, g.index, "upper").label
        hi = edge_parity(p, g.index + 1, "lower").label
        print(f"  gap {g.index}: {lo} below, {hi} above, gamma = {tb.bulk_index(p, g.index).gamma:+d}")

# Shifting the origin by x0 moves the Wilson-loop phase by -2 pi x0.
x0 = 0.2
a = zak_wilson(A, 1, 64).theta
b = zak_wilson(tb.shift_origin(A, x0), 1, 64).theta
print(np.angle(np.exp(1j * (b - a))), -2 * np.pi * x0)
