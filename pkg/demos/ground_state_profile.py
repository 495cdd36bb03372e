"""Radial ground state of Delta U = U - U^3: centre value, tail and the linearized spectrum."""

import numpy as np

from vortex_spike.ground_state import decay_constant, l2_mass, nondegeneracy_audit, ode_residual, shoot

gs = shoot()
print(f"U(0)            = {gs.center_value:.10f}")
print(f"lambda          = {decay_constant(gs):.8f}   (U ~ lambda r^-1/2 e^-r)")
print(f"|U|_2^2         = {l2_mass(gs):.8f}")
print(f"max ODE defect  = {np.max(ode_residual(gs)):.1e}")

vals, _ = nondegeneracy_audit(gs)
print("\nlowest eigenvalues of -Delta + gamma'(U) by angular index")
for v, m in sorted(vals)[:6]:
    print(f"  m = {m}: {v:+.6f}")

r = np.array([0.0, 1.0, 2.0, 4.0, 8.0, 12.0])
for ri, ui in zip(r, gs.radial(r)):
    print(f"  U({ri:4.1f}) = {ui:.6e}")
