"""Time stepping for Navier-Stokes flow with the weakly singular memory term.

Each step is first order and semi-implicit: diffusion and the newest memory
weight are implicit, advection is explicit, and incompressibility is
restored by an incremental pressure projection in rotational form.  The memory term is
``rho * Lap_h (sum_j omega_{n+1-j} u^j)``, with the history sum taken either
directly or from sum-of-exponentials accumulators.
"""

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .kernel import HistoryBuffer, KernelParams, fit_soe, make_weights
from .mac import (
    StaggeredGrid,
    VelocityField,
    advect,
    divergence,
    gradient,
    helmholtz_solve,
    inner,
    laplacian,
    norms,
    pressure_poisson_solve,
)
from .manufactured import ManufacturedSolution

__all__ = [
    "SimulationError",
    "ForcingSpec",
    "FluidConfig",
    "TransientState",
    "RunResult",
    "initial_state",
    "step",
    "run",
    "energy_monitor",
    "manufactured_forcing",
    "DIAGNOSTIC_COLUMNS",
    "write_diagnostics_csv",
]

DIAGNOSTIC_COLUMNS = ("t", "l2_sq", "h1_sq", "a_norm_sq", "ut_l2_sq", "mem_form", "div_residual")

QUADRATIC_COST_STEPS = 10_000


class SimulationError(RuntimeError):
    """Time stepping produced non-finite values."""

    def __init__(self, message, step_index, dump=None):
        super().__init__(message)
        self.step_index = step_index
        self.dump = dump or {}


@dataclass(eq=False)
class ForcingSpec:
    """Body force ``f(t)``.

    ``zero``: ``f = 0``.  ``steady``: ``f = fbar``.  ``decaying``:
    ``f = fbar + perturbation * exp(-alpha0 t)``.  ``manufactured``: the
    forcing of a :class:`ManufacturedSolution`.
    """

    variant: str = "zero"
    fbar: Optional[VelocityField] = None
    perturbation: Optional[VelocityField] = None
    alpha0: float = 0.0
    manufactured: Optional[ManufacturedSolution] = None

    def __post_init__(self):
        if self.variant not in ("zero", "steady", "decaying", "manufactured"):
            raise ValueError(f"unknown forcing variant {self.variant!r}")
        if self.variant in ("steady", "decaying") and self.fbar is None:
            raise ValueError(f"{self.variant} forcing needs fbar")
        if self.variant == "decaying":
            if self.perturbation is None:
                raise ValueError("decaying forcing needs a perturbation field")
            if not self.alpha0 > 0.0:
                raise ValueError("decaying forcing needs alpha0 > 0")
        if self.variant == "manufactured" and self.manufactured is None:
            raise ValueError("manufactured forcing needs a ManufacturedSolution")

    def __call__(self, t, grid):
        if self.variant == "zero":
            return VelocityField.zeros(grid)
        if self.variant == "steady":
            return self.fbar.copy()
        if self.variant == "decaying":
            return self.fbar + self.perturbation * math.exp(-self.alpha0 * t)
        return self.manufactured.forcing(t)

    def steady_part(self, grid):
        if self.variant in ("steady", "decaying"):
            return self.fbar.copy()
        return VelocityField.zeros(grid)


@dataclass(eq=False)
class FluidConfig:
    """Everything that defines one transient run."""

    mu: float
    kernel: KernelParams
    grid: StaggeredGrid
    dt: float
    t_end: float
    forcing: ForcingSpec = field(default_factory=ForcingSpec)
    initial_velocity: Optional[VelocityField] = None
    initial_pressure: Optional[np.ndarray] = None
    history_mode: str = "direct"
    soe_tol: float = 1e-8
    memory: bool = True
    advection: bool = True

    def __post_init__(self):
        if not self.mu > 0.0:
            raise ValueError(f"mu must be > 0, got {self.mu!r}")
        if not self.kernel.delta > 0.0:
            raise ValueError("the flow model needs delta > 0")
        if not self.dt > 0.0:
            raise ValueError(f"dt must be > 0, got {self.dt!r}")
        if not self.t_end >= 0.0:
            raise ValueError(f"t_end must be >= 0, got {self.t_end!r}")
        if self.history_mode not in ("direct", "soe"):
            raise ValueError(f"history_mode must be 'direct' or 'soe', got {self.history_mode!r}")
        if self.initial_velocity is None:
            self.initial_velocity = VelocityField.zeros(self.grid)
        u0 = self.initial_velocity
        div = np.abs(divergence(u0)).max()
        scale = max(norms(u0)["l2"], 1e-300) / min(self.grid.hx, self.grid.hy)
        if div > 1e-10 * scale and div > 1e-12:
            raise ValueError(f"initial velocity is not discretely divergence-free (max |div| = {div:.3g})")

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))

    @cached_property
    def weights(self):
        return make_weights(self.kernel, self.dt, self.n_steps + 2)

    @cached_property
    def soe(self):
        horizon = max(self.t_end, 2.0 * self.dt) + self.dt
        return fit_soe(self.kernel, self.dt, horizon, self.soe_tol)

    @property
    def omega0(self):
        return self.weights.omega[0] if self.memory else 0.0

    def cfl(self, velocity):
        g = self.grid
        return self.dt * max(np.abs(velocity.u).max() / g.hx, np.abs(velocity.v).max() / g.hy)


@dataclass(eq=False)
class TransientState:
    n: int
    t: float
    velocity: VelocityField
    pressure: np.ndarray
    history: HistoryBuffer
    previous_velocity: Optional[VelocityField] = None
    mem_increment: float = 0.0
    mem_form: float = 0.0

    def copy(self):
        return TransientState(
            self.n, self.t, self.velocity.copy(), self.pressure.copy(), self.history.copy(),
            None if self.previous_velocity is None else self.previous_velocity.copy(),
            self.mem_increment, self.mem_form,
        )


def initial_state(config):
    g = config.grid
    if config.history_mode == "direct":
        history = HistoryBuffer(config.weights, "direct", shape=(g.size,))
    else:
        history = HistoryBuffer(config.weights, "compressed", soe=config.soe, shape=(g.size,))
    p0 = np.zeros((g.nx, g.ny)) if config.initial_pressure is None else np.array(config.initial_pressure, dtype=float)
    return TransientState(0, 0.0, config.initial_velocity.copy(), p0, history)


def step(state, config):
    """Advance one time step; the input state's history buffer is advanced in place."""
    g = config.grid
    dt, mu, rho = config.dt, config.mu, config.kernel.rho
    n = state.n
    t_next = (n + 1) * dt
    un = state.velocity

    rhs = un / dt + config.forcing(t_next, g) - gradient(state.pressure, g)
    if config.advection:
        rhs = rhs - advect(un, un)
    lagged = None
    if config.memory:
        lagged = VelocityField(g, state.history.lagged_sum())
        rhs = rhs + rho * laplacian(lagged)
    ustar = helmholtz_solve(1.0 / dt, mu + rho * config.omega0, rhs)

    phi = -pressure_poisson_solve(divergence(ustar) / dt, g)
    unew = ustar - dt * gradient(phi, g)
    # rotational correction; without it grid-scale pressure errors relax at O(1/(nu dt^2 |lambda|))
    pnew = state.pressure + phi - (mu + rho * config.omega0) * divergence(ustar)

    if not (np.all(np.isfinite(unew.data)) and np.all(np.isfinite(pnew))):
        raise SimulationError(
            f"non-finite values at step {n + 1} (t={t_next:g})",
            n + 1,
            dump={"t": t_next, "max_u_prev": float(np.abs(un.data).max()), "cfl_prev": config.cfl(un)},
        )

    # memory quadratic form increment: dt * (rho * conv(grad u)(t_{n+1}), grad u^{n+1})
    increment = 0.0
    if config.memory and rho > 0.0:
        conv = config.weights.omega[0] * unew + lagged
        increment = dt * rho * inner(-laplacian(conv), unew, g)
    state.history.append(unew.data)
    return TransientState(
        n + 1, t_next, unew, pnew, state.history, un, increment, state.mem_form + increment
    )


def energy_monitor(state, config):
    """Energy-type quantities of the current state.

    ``ut_l2_sq`` uses the backward difference to the previous step (zero at
    the first record); ``mem_form`` is the cumulative discrete memory
    quadratic form and ``mem_increment`` its last increment.
    """
    g = config.grid
    nm = norms(state.velocity)
    if state.previous_velocity is None:
        ut_sq = 0.0
    else:
        ut = (state.velocity - state.previous_velocity) / config.dt
        ut_sq = inner(ut, ut, g)
    div = divergence(state.velocity)
    return {
        "t": state.t,
        "l2_sq": nm["l2"] ** 2,
        "h1_sq": nm["h1_semi"] ** 2,
        "a_norm_sq": nm["a_norm"] ** 2,
        "ut_l2_sq": ut_sq,
        "mem_form": state.mem_form,
        "mem_increment": state.mem_increment,
        "div_residual": float(np.abs(div).max()),
    }


@dataclass
class RunResult:
    records: list
    state: TransientState
    snapshots: list = field(default_factory=list)

    def series(self, key):
        return np.array([r[key] for r in self.records])


def run(config, cadence=1, state=None, observer: Optional[Callable] = None, snapshot_every=None,
        n_steps=None):
    """March ``config`` to ``t_end`` (or ``n_steps`` further steps).

    Every ``cadence`` steps (and at the start) a record from
    :func:`energy_monitor` is stored, extended with ``observer(state)`` when
    given.  With ``snapshot_every`` the state is deep-copied at that cadence.
    """
    if config.history_mode == "direct" and config.n_steps > QUADRATIC_COST_STEPS:
        warnings.warn(
            f"direct history with {config.n_steps} steps has quadratic cost; consider history_mode='soe'",
            RuntimeWarning,
            stacklevel=2,
        )
    if state is None:
        state = initial_state(config)
    if config.advection and config.cfl(state.velocity) > 1.0:
        warnings.warn(f"advective CFL {config.cfl(state.velocity):.3g} exceeds 1", RuntimeWarning, stacklevel=2)
    total = config.n_steps - state.n if n_steps is None else int(n_steps)

    def record(s):
        rec = energy_monitor(s, config)
        if observer is not None:
            rec.update(observer(s))
        return rec

    records = [record(state)]
    snapshots = []
    # blow-up is reported by the finiteness check in step()
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(total):
            state = step(state, config)
            if state.n % cadence == 0:
                records.append(record(state))
            if snapshot_every and state.n % snapshot_every == 0:
                snapshots.append(state.copy())
    return RunResult(records, state, snapshots)


def manufactured_forcing(choice, grid, kernel, mu, t, alpha=0.25):
    """Forcing of the named manufactured solution (only ``"poly"`` exists)."""
    if choice != "poly":
        raise ValueError(f"unknown manufactured solution {choice!r}")
    return ManufacturedSolution(grid, kernel, mu, alpha).forcing(t)


def write_diagnostics_csv(path, records, columns=DIAGNOSTIC_COLUMNS):
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for rec in records:
            fh.write(",".join(f"{float(rec[c]):.17g}" for c in columns) + "\n")
