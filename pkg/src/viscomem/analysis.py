"""Measuring exponential convergence to the steady state.

Decay rates are fitted by least squares on ``log y`` and compared with the
admissible rate ``1/2 min(delta, mu0 * gamma0 / 2)`` built from measured
discrete constants.  The fitted values are surrogates: the convergence
results are upper bounds with unspecified prefactors.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .kernel import convolve_direct, kernel_moment, make_weights
from .mac import StaggeredGrid, inner, laplacian, norms, poincare_constant, stokes_operator
from .manufactured import ManufacturedSolution, StreamProfile
from .special import kernel_tail
from .steady import SteadyConfig, effective_viscosity, solve_steady
from .transient import FluidConfig, ForcingSpec, run

__all__ = [
    "FitError",
    "DecayFit",
    "DecayBound",
    "SeriesReport",
    "DecayReport",
    "fit_decay",
    "late_window",
    "decay_study",
    "steady_reformulation_residual",
    "convergence_table",
    "config_fingerprint",
    "RELIABLE_R2",
]

RELIABLE_R2 = 0.98
MARGIN = 0.1
SERIES = ("z_l2", "z_h1", "z_a", "eta_l2")


class FitError(ValueError):
    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = list(indices)


@dataclass(frozen=True)
class DecayFit:
    alpha: float
    kappa: float
    r_squared: float
    window: tuple

    @property
    def reliable(self):
        return self.r_squared >= RELIABLE_R2


def fit_decay(t, y, window=None):
    """Fit ``y ~ kappa * exp(-alpha t)`` by least squares on ``log y``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape:
        raise FitError("t and y must have the same shape")
    if window is None:
        window = (float(t[0]), float(t[-1]))
    sel = np.flatnonzero((t >= window[0]) & (t <= window[1]))
    if sel.size < 8:
        raise FitError(f"need at least 8 points in window {window}, got {sel.size}")
    bad = sel[~(y[sel] > 0.0)]
    if bad.size:
        raise FitError(f"nonpositive values at indices {bad.tolist()}", bad)
    ts, ly = t[sel], np.log(y[sel])
    design = np.column_stack([np.ones_like(ts), -ts])
    (log_kappa, alpha), *_ = np.linalg.lstsq(design, ly, rcond=None)
    resid = ly - design @ np.array([log_kappa, alpha])
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    return DecayFit(float(alpha), float(math.exp(log_kappa)), r2, (float(ts[0]), float(ts[-1])))


@dataclass(frozen=True)
class DecayBound:
    delta: float
    mu0_est: float
    gamma0_h: float

    @property
    def alpha_max(self):
        return 0.5 * min(self.delta, self.mu0_est * self.gamma0_h / 2.0)


def late_window(t_start, t_end):
    """Last 60% of the run, without its final 2%."""
    span = t_end - t_start
    return (t_start + 0.4 * span, t_end - 0.02 * span)


@dataclass
class SeriesReport:
    name: str
    fit: DecayFit
    alpha_expect: float
    bounded: bool

    @property
    def passed(self):
        return self.fit.reliable and self.fit.alpha >= 0.9 * self.alpha_expect and self.bounded


@dataclass
class DecayReport:
    bound: DecayBound
    alpha0: float
    alpha_expect: float
    series: dict
    times: np.ndarray
    values: dict
    steady: object
    fingerprint: str
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return all(s.passed for s in self.series.values())

    def csv_rows(self):
        rows = []
        for name in SERIES:
            s = self.series[name]
            rows.append([name, s.fit.alpha, s.fit.kappa, s.fit.r_squared, s.fit.window[0], s.fit.window[1],
                         s.alpha_expect, s.passed])
        return rows

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("series_name,alpha,kappa,r2,window_start,window_end,alpha_expect,pass\n")
            for row in self.csv_rows():
                fh.write(",".join([row[0]] + [f"{v:.17g}" for v in row[1:7]] + [str(row[7]).lower()]) + "\n")

    def summary(self):
        b = self.bound
        lines = [
            f"config {self.fingerprint}",
            f"delta={b.delta:.6g} mu0_est={b.mu0_est:.6g} gamma0_h={b.gamma0_h:.6g} alpha_max={b.alpha_max:.6g}",
            f"alpha0={self.alpha0:.6g} alpha_expect={self.alpha_expect:.6g}",
        ]
        for name in SERIES:
            s = self.series[name]
            lines.append(
                f"{name}: alpha={s.fit.alpha:.6g} kappa={s.fit.kappa:.6g} r2={s.fit.r_squared:.6f} "
                f"bounded={s.bounded} {'PASS' if s.passed else 'FAIL'}"
            )
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines)


def config_fingerprint(*objs):
    """Stable SHA-256 over parameters and field data of configs."""
    h = hashlib.sha256()

    def feed(obj):
        if obj is None or isinstance(obj, (bool, int, float, str)):
            h.update(json.dumps(obj).encode())
        elif isinstance(obj, np.ndarray):
            h.update(np.ascontiguousarray(obj, dtype="<f8").tobytes())
        elif hasattr(obj, "data") and hasattr(obj, "grid"):
            feed(obj.grid)
            feed(obj.data)
        elif hasattr(obj, "__dataclass_fields__"):
            h.update(type(obj).__name__.encode())
            for name in obj.__dataclass_fields__:
                h.update(name.encode())
                feed(getattr(obj, name))
        elif isinstance(obj, (list, tuple)):
            for item in obj:
                feed(item)
        else:
            h.update(repr(obj).encode())

    for obj in objs:
        feed(obj)
    return h.hexdigest()[:16]


def _no_late_growth(t, y, rate):
    # e^{rate t} y must stay under twice its window median over the later half
    if y.size == 0:
        return False
    weighted = np.exp(rate * (t - t[0])) * y if math.isfinite(rate) else y
    late = weighted[weighted.size // 2:]
    return bool(np.all(late <= 2.0 * np.median(weighted)))


def decay_study(transient, steady, margin=MARGIN, cadence=1, steady_solution=None):
    """Run ``transient`` and measure how fast it approaches the steady state.

    Fits ``||z||_0``, ``|z|_1``, ``||A_h z||_0`` and ``||eta||_0`` (``z = u - ubar``,
    ``eta = p - pbar``) on the late window and checks each fitted rate
    against ``min(alpha0, alpha_max (1 - margin))``.
    """
    sol = steady_solution if steady_solution is not None else solve_steady(steady)
    ubar, pbar = sol.velocity, sol.pressure
    g = transient.grid
    mu0 = sol.diagnostics.get("mu0_est")
    if mu0 is None:
        from .mac import mu0_estimate

        mu0 = mu0_estimate(ubar, transient.mu, seed=steady.seed)
    bound = DecayBound(transient.kernel.delta, mu0, poincare_constant(g))
    forcing = transient.forcing
    alpha0 = forcing.alpha0 if forcing.variant == "decaying" else math.inf
    alpha_expect = min(alpha0, bound.alpha_max * (1.0 - margin))
    notes = ["mu0 is an empirical estimate; the coercivity assumption is not verified, only sampled"]
    if mu0 <= 0.0:
        notes.append("mu0_est <= 0: coercivity assumption violated empirically")

    def observer(state):
        z = state.velocity - ubar
        nz = norms(z)
        eta = state.pressure - pbar
        return {"z_l2": nz["l2"], "z_h1": nz["h1_semi"], "z_a": nz["a_norm"],
                "eta_l2": math.sqrt(inner(eta, eta, g))}

    result = run(transient, cadence=cadence, observer=observer)
    times = result.series("t")
    window = late_window(times[0], times[-1])
    series = {}
    values = {}
    in_win = (times >= window[0]) & (times <= window[1])
    for name in SERIES:
        y = result.series(name)
        values[name] = y
        try:
            fit = fit_decay(times, y, window)
        except Exception as exc:  # noqa: BLE001 - a failed fit is reported, not raised
            fit = DecayFit(float("nan"), float("nan"), 0.0, window)
            notes.append(f"{name}: fit failed ({exc})")
        bounded = _no_late_growth(times[in_win], y[in_win], alpha_expect)
        series[name] = SeriesReport(name, fit, alpha_expect, bounded)
        if not fit.reliable:
            notes.append(f"{name}: unreliable fit (r2={fit.r_squared:.4f})")
    fp = config_fingerprint(transient.mu, transient.kernel, transient.grid, transient.dt, transient.t_end,
                            transient.forcing.variant, transient.forcing.alpha0, transient.initial_velocity,
                            steady.fbar, margin)
    return DecayReport(bound, alpha0, alpha_expect, series, times, values, sol, fp, notes)


def steady_reformulation_residual(ubar, kernel, dt, times):
    """Mismatch between the discrete memory of a constant history and its exact value.

    For each ``t = n dt`` returns
    ``|| [rho * conv_n(1) - (rho * moment - tail(t))] * Lap_h ubar ||_0``, which
    vanishes up to rounding because the product rule is exact on constants.
    """
    lap = laplacian(ubar)
    lap_norm = math.sqrt(inner(lap, lap, ubar.grid))
    steps = [int(round(t / dt)) for t in times]
    if any(n < 1 for n in steps):
        raise ValueError("sample times must be at least one step")
    weights = make_weights(kernel, dt, max(steps))
    moment = kernel.rho * kernel_moment(kernel)
    out = []
    for n in steps:
        discrete = kernel.rho * float(convolve_direct(weights, np.ones(n)))
        exact = moment - kernel_tail(kernel, n * dt)
        out.append(abs(discrete - exact) * lap_norm)
    return np.array(out)


def _observed_orders(errors):
    return [math.log2(errors[i] / errors[i + 1]) if errors[i + 1] > 0 else math.inf
            for i in range(len(errors) - 1)]


def convergence_table(refine, levels, kernel, mu=1.0, base=16, dt0=0.025, t_end=1.0, alpha=0.9,
                      amplitude=1.0, solver="steady", discrete=False):
    """Errors against a manufactured solution under refinement.

    ``refine="space"`` halves ``h`` from ``1/base``; ``refine="time"`` halves
    ``dt`` from ``dt0`` on a ``base x base`` grid.  ``solver`` is
    ``"steady"`` or ``"transient"``.  With ``discrete=True`` the forcing is
    built from the grid operators, so only time (or no) error remains.
    Returns rows ``{"level", "h", "dt", "error", "order"}``.
    """
    if refine not in ("space", "time"):
        raise ValueError("refine must be 'space' or 'time'")
    rows = []
    errors = []
    for k in range(int(levels)):
        n = base * 2**k if refine == "space" else base
        dt = dt0 / 2**k if refine == "time" else dt0
        g = StaggeredGrid(n, n)
        if solver == "steady":
            err = _steady_error(g, kernel, mu, amplitude, discrete)
        elif solver == "transient":
            err = _transient_error(g, kernel, mu, dt, t_end, alpha, amplitude, discrete)
        else:
            raise ValueError(f"unknown solver {solver!r}")
        errors.append(err)
        rows.append({"level": k, "h": 1.0 / n, "dt": dt, "error": err, "order": None})
    for row, order in zip(rows[1:], _observed_orders(errors)):
        row["order"] = order
    return rows


def _steady_error(grid, kernel, mu, amplitude, discrete):
    prof = StreamProfile(grid, amplitude)
    nu = effective_viscosity(mu, kernel)
    if discrete:
        from .mac import advect, gradient

        exact = prof.velocity(discrete=True)
        fbar = -nu * laplacian(exact) + advect(exact, exact) + gradient(prof.pressure(), grid)
    else:
        exact = prof.velocity()
        fbar = prof.laplacian() * (-nu) + prof.convection() + prof.pressure_gradient() * amplitude
    sol = solve_steady(SteadyConfig(mu, kernel, grid, fbar, tol=1e-12, diagnostics=False))
    e = sol.velocity - exact
    return math.sqrt(inner(e, e, grid))


def _transient_error(grid, kernel, mu, dt, t_end, alpha, amplitude, discrete):
    ms = ManufacturedSolution(grid, kernel, mu, alpha=alpha, amplitude=amplitude, discrete=discrete)
    cfg = FluidConfig(mu, kernel, grid, dt, t_end, forcing=ForcingSpec("manufactured", manufactured=ms),
                      initial_velocity=ms.initial_velocity(), initial_pressure=ms.pressure(0.0))
    res = run(cfg, cadence=10**9)
    e = res.state.velocity - ms.velocity(res.state.t)
    return math.sqrt(inner(e, e, grid))
