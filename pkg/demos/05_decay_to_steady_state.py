"""
Exponential approach to the steady state
========================================

Start away from the steady state, force with ``fbar + g exp(-alpha0 t)``
and fit decay rates of the velocity error (three norms) and the pressure
error on the late part of the run.
"""

# %%
from viscomem import FluidConfig, ForcingSpec, KernelParams, StaggeredGrid, SteadyConfig, named_profile
from viscomem.analysis import decay_study

g = StaggeredGrid(32, 32)
kp = KernelParams(0.5, 1.0, 0.5)
fbar = named_profile("shear", g, 2.0)
forcing = ForcingSpec("decaying", fbar=fbar, perturbation=named_profile("sines", g, 1.0), alpha0=1.0)
transient = FluidConfig(1.0, kp, g, 0.02, 12.0, forcing=forcing, initial_velocity=named_profile("poly", g, 5.0))

report = decay_study(transient, SteadyConfig(1.0, kp, g, fbar), cadence=5)
print(report.summary())

# %%
# Fitted rates exceed the guaranteed rate: the bound is an upper bound on
# the error, not a prediction of the rate.
for name, series in report.series.items():
    print(f"{name:7s} alpha={series.fit.alpha:.3f}  r2={series.fit.r_squared:.5f}  pass={series.passed}")
