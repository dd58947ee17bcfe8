"""
Operators on the staggered grid
===============================

Divergence, gradient, Laplacian, skew-symmetric advection and the discrete
Leray projection, checked on random data.
"""

# %%
import numpy as np

from viscomem import StaggeredGrid, VelocityField
from viscomem.mac import advect, divergence, gradient, inner, laplacian, leray_project, norms, poincare_constant

g = StaggeredGrid(32, 32)
rng = np.random.default_rng(0)
a = VelocityField(g, rng.standard_normal(g.size))
b = VelocityField(g, rng.standard_normal(g.size))
q = rng.standard_normal((g.nx, g.ny))

# %%
# Gradient and divergence are negative adjoints; the Laplacian is symmetric.
print("(grad q, a) + (q, div a) =", inner(gradient(q, g), a, g) + inner(q, divergence(a), g))
print("(Lap a, b) - (a, Lap b)  =", inner(laplacian(a), b, g) - inner(a, laplacian(b), g))

# %%
# The advection form vanishes when the last two arguments coincide.
print("b(a, b, b) =", inner(advect(a, b), b, g))

# %%
# Projection removes the divergence and is idempotent.
pa = leray_project(a)
print("max |div P a| =", np.abs(divergence(pa)).max())
print("||P P a - P a|| =", norms(leray_project(pa) - pa)["l2"])

# %%
# Smallest Dirichlet eigenvalue, close to 2 pi^2 on the unit square.
print("gamma0_h =", poincare_constant(StaggeredGrid(64, 64)), " 2 pi^2 =", 2 * np.pi**2)
