"""Incompressible flow with a weakly singular fading-memory term.

The memory kernel is ``K(t) = t**(-beta) * exp(-delta * t)``.  The package
provides incomplete gamma functions, product-integration weights and
exponential-sum compression for the kernel, a staggered-grid discretization
of a rectangle, a transient solver, a steady solver with effective
viscosity, decay-rate analysis and a configuration-driven command line.
"""

from .analysis import DecayBound, DecayFit, convergence_table, decay_study, fit_decay, steady_reformulation_residual
from .config import ConfigError, ExperimentSpec, parse_config, render
from .experiments import run_experiment
from .kernel import (
    HistoryBuffer,
    KernelParams,
    QuadratureWeights,
    SoeApproximation,
    SoeFitError,
    convolve_direct,
    convolve_soe_step,
    fit_soe,
    kernel_eval,
    kernel_moment,
    make_weights,
    positivity_certificate,
)
from .mac import (
    SolverError,
    StaggeredGrid,
    VelocityField,
    advect,
    divergence,
    gradient,
    helmholtz_solve,
    laplacian,
    leray_project,
    mu0_estimate,
    norms,
    poincare_constant,
    pressure_poisson_solve,
    read_snapshot,
    write_snapshot,
)
from .manufactured import ManufacturedSolution, named_profile
from .special import gamma_fn, kernel_primitive, kernel_tail, lower_incomplete_gamma, upper_incomplete_gamma
from .steady import IterationError, SteadyConfig, SteadySolution, effective_viscosity, solve_steady
from .transient import FluidConfig, ForcingSpec, SimulationError, energy_monitor, run, step

__version__ = "0.1.0"
