"""
Steady flow with an effective viscosity
=======================================

At steady state the memory acts as extra viscosity ``mu + rho * mass``.
Picard (Stokes) iteration and Newton agree, and the solution obeys the
energy bound ``|u|_1 <= ||f||_{-1} / nu_eff``.
"""

# %%
from viscomem import KernelParams, StaggeredGrid, SteadyConfig, effective_viscosity, named_profile, solve_steady
from viscomem.mac import norms
from viscomem.steady import dual_norm

g = StaggeredGrid(32, 32)
kp = KernelParams(0.5, 1.0, 0.5)
fbar = named_profile("shear", g, 20.0)
print("nu_eff =", effective_viscosity(1.0, kp))

# %%
picard = solve_steady(SteadyConfig(1.0, kp, g, fbar, tol=1e-12))
newton = solve_steady(SteadyConfig(1.0, kp, g, fbar, tol=1e-12, method="newton", diagnostics=False))
print("Picard iterations:", picard.iterations, " Newton iterations:", newton.iterations)
print("relative difference:", norms(picard.velocity - newton.velocity)["l2"] / norms(picard.velocity)["l2"])

# %%
bound = dual_norm(fbar) / picard.nu_eff
print(f"|u|_1 = {norms(picard.velocity)['h1_semi']:.5f}  bound = {bound:.5f}")
for key, value in picard.diagnostics.items():
    print(f"  {key}: {value}")

# %%
# As beta -> 0 the solution approaches the classical one with viscosity mu + rho/delta.
classical = solve_steady(SteadyConfig(1.5, KernelParams(0.0, 1.0, 0.0), g, fbar, diagnostics=False)).velocity
for beta in (0.1, 0.01, 0.001):
    u = solve_steady(SteadyConfig(1.0, KernelParams(beta, 1.0, 0.5), g, fbar, diagnostics=False)).velocity
    print(f"beta={beta:<6} distance to classical {norms(u - classical)['l2']:.3e}")
