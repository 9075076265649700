"""
The biharmonic heat kernel
==========================

On the flat torus the kernel of ``u_t + Laplacian^2 u = 0`` is a mode sum.
Its value on the diagonal behaves like t^(-1/2) for short times (real
dimension two, fourth order), and Duhamel's formula solves the forced
problem exactly mode by mode.
"""
import numpy as np

from twistcal.heatkernel import KernelSpec, duhamel_solve, homogeneous_evolve, on_diagonal_decay
from twistcal.geometry import TorusGrid
from twistcal.spacetime import SpaceTimeField

grid = TorusGrid(32)
slope, _ = on_diagonal_decay(KernelSpec(grid), np.logspace(-5, -3, 21))
print(f"diagonal decay slope {slope:.3f}  (short-time exponent -0.5)")

X, Y = grid.coords()
u0 = 1.0 + 0.3 * np.cos(2 * np.pi * X) * np.sin(4 * np.pi * Y)
for t in (1e-6, 1e-5, 1e-4):
    u = homogeneous_evolve(u0, t, grid)
    print(f"t = {t:.0e}: mean {u.mean():.15f}  oscillation {u.max() - u.min():.3e}")

# a forcing that ramps up from zero; the response starts from zero
ts = np.linspace(0, 0.02, 41)
f = SpaceTimeField.from_function(grid, ts, lambda X, Y, t: t * np.sin(2 * np.pi * X))
V = duhamel_solve(f)
print("Duhamel response amplitude at final time: %.3e" % np.abs(V.values[-1]).max())
