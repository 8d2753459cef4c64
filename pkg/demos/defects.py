# How a slab inserted at the junction affects the interface mode.

import topoband as tb
from topoband.interface import (
    common_gap,
    counterexample_report,
    defect_mode_search,
    find_interface_modes,
    stability_bound,
    stability_value,
)
from topoband.medium import DefectSpec, Piece

A = tb.layered([(0.25, 1.3, 1.0), (0.5, 1.0, 1.0), (0.25, 1.3, 1.0)])
B = tb.shift_origin(A, 0.5)
gap = common_gap(A, B)[0]
print("gap", gap.interval, "mode without defect:", [m.E for m in find_interface_modes(A, B, gap=gap)])

# A thin slab passes the bound, so a mode is guaranteed.
thin = DefectSpec(0.0, 0.05, [Piece(0.05, 2.0, 1.0)])
print("thin slab: bound value", stability_value(thin, gap), stability_bound(thin, gap),
      [m.E for m in defect_mode_search(A, B, thin, gap=gap)])

# One constant layer with eps, mu >= 1 keeps a mode whatever its width.
for d in (0.5, 5.0, 50.0):
    df = DefectSpec(0.0, d, [Piece(d, 2.5, 1.5)])
    print(f"width {d:5}: bound holds {stability_bound(df, gap)}, modes {[round(m.E, 6) for m in defect_mode_search(A, B, df, gap=gap)]}")

# Two layers, one optically dense and one thin, can remove it.
rep = counterexample_report(A, B, gap)
cx = rep.defect
print("two-layer defect widths", [pc.width for pc in cx.pieces], "valid", rep.valid)
print("modes with it:", defect_mode_search(A, B, cx, gap=gap))
small = DefectSpec(0.0, cx.d2 / 100, [Piece(pc.width / 100, pc.eps, pc.mu) for pc in cx.pieces])
print("shrunk 100x:", [m.E for m in defect_mode_search(A, B, small, gap=gap)])
