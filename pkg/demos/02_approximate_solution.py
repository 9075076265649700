"""
Power series in the twisting parameter
======================================

For small s the flow is close to the s = 0 flow.  The package builds the
Taylor coefficients in s by jet arithmetic; truncating at order N leaves
a residual of size s^(N+1).  The printed slopes are log-log fits of the
residual against s.
"""
import numpy as np

from twistcal.approx import build_approximate, residual_order_fit
from twistcal.geometry import KahlerPotential, TorusGrid

grid = TorusGrid(32)
X, Y = grid.coords()
psi0 = KahlerPotential(grid, 1e-2 * np.cos(2 * np.pi * X))

approx = build_approximate(psi0, 2, 0.2, 1e-3)
s_values = [0.02, 0.04, 0.08]
for order in range(3):
    truncated = type(approx)(approx.grid, approx.times, approx.phi0, approx.u[:order], approx.dt)
    slope = residual_order_fit(truncated, s_values)[0]
    print(f"order {order}: residual slope {slope:.3f}  (expected about {order + 1})")

for k, coeff in enumerate(approx.u, start=1):
    print(f"coefficient {k}: sup over slab {np.abs(coeff).max():.3e}")
