"""Smallest eigenvalue of the linearized operator on the strip as the spike shrinks.

The broken vertical translation leaves one eigenvalue of size
delta^(1/2) e^(-2/delta); the fit below recovers the exponent.
"""

from vortex_spike.ground_state import shoot
from vortex_spike.pipeline import fit_scaling, spectral_point
from vortex_spike.strip import StripGrid

gs = shoot()
deltas = [0.25, 0.3, 0.35, 0.4, 0.5]
rows = [spectral_point(gs, StripGrid.auto(d)) for d in deltas]
print(" delta        l (inverse)    l (contraction)   |F(0)|")
for r in rows:
    print(f"{r['delta']:6.3f}  {r['l']:.10e}  {r['l_contraction']:.10e}  {r['F_norm']:.4e}")
c0, c2, r2 = fit_scaling(deltas, [r["l"] for r in rows], 0.5)
print(f"\nlog l = c0 + 1/2 log delta + c2/delta:  c2 = {c2:+.4f}  (expected -2), R^2 = {r2:.5f}")
