"""Experiment orchestration behind the command line.

``run_experiment`` builds every object from a validated ExperimentSpec before it
touches the output directory, so an invalid configuration leaves nothing behind but
``error.json``.  Each kind writes ``effective.cfg``, its CSV outputs,
``checks.csv`` and ``summary.txt``.
"""

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .analysis import convergence_table, decay_study
from .config import ConfigError, render
from .kernel import (
    SoeFitError,
    fit_soe,
    kernel_moment,
    make_weights,
    positivity_certificate,
    weight_matrix_spectrum,
)
from .mac import SolverError, StaggeredGrid, inner, write_snapshot
from .manufactured import ManufacturedSolution, named_profile
from .special import kernel_primitive
from .steady import IterationError, SteadyConfig, solve_steady, write_solution
from .transient import DIAGNOSTIC_COLUMNS, FluidConfig, ForcingSpec, SimulationError, run, write_diagnostics_csv

__all__ = ["EXIT_PASS", "EXIT_FAIL", "EXIT_CONFIG", "EXIT_NUMERICAL", "Check", "Outcome", "run_experiment",
           "write_error_record"]

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
NUMERICAL_ERRORS = (SimulationError, SolverError, IterationError, FloatingPointError, np.linalg.LinAlgError)


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    relation: str = "<="


@dataclass
class Outcome:
    status: int
    checks: list = field(default_factory=list)
    files: list = field(default_factory=list)
    message: str = ""


def _ff(x):
    return f"{float(x):.17g}"


def write_error_record(outdir, status, message, key=None, extra=None):
    """Machine-readable failure description in ``outdir/error.json``."""
    kinds = {EXIT_CONFIG: "config", EXIT_NUMERICAL: "numerical"}
    record = {"status": status, "error": kinds.get(status, "failure"), "message": message, "key": key}
    if extra:
        record.update(extra)
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, "error.json")
    with open(path, "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return path


def _grid(spec):
    g = spec["grid"]
    return StaggeredGrid(g["nx"], g["ny"], g["lx"], g["ly"])


def _steady_config(spec, grid):
    f, s = spec["forcing"], spec["steady"]
    fbar = named_profile(f["profile"], grid, f["amplitude"])
    return SteadyConfig(spec["fluid"]["mu"], spec.kernel, grid, fbar, method=s["method"], tol=s["tol"],
                        max_iters=s["max_iters"], diagnostics=s["diagnostics"], seed=spec.seed)


def _fluid_config(spec, grid):
    fl, f = spec["fluid"], spec["forcing"]
    kp = spec.kernel
    manufactured = None
    u0 = named_profile(fl["initial"], grid, fl["initial_amplitude"])
    p0 = None
    variant = f["variant"]
    if variant == "manufactured":
        manufactured = ManufacturedSolution(grid, kp, fl["mu"], alpha=f["manufactured_alpha"],
                                            amplitude=f["manufactured_amplitude"], discrete=f["discrete"])
        forcing = ForcingSpec("manufactured", manufactured=manufactured)
        u0, p0 = manufactured.initial_velocity(), manufactured.pressure(0.0)
    elif variant == "zero":
        forcing = ForcingSpec("zero")
    else:
        fbar = named_profile(f["profile"], grid, f["amplitude"])
        if variant == "steady":
            forcing = ForcingSpec("steady", fbar=fbar)
        else:
            pert = named_profile(f["perturbation"], grid, f["perturbation_amplitude"])
            forcing = ForcingSpec("decaying", fbar=fbar, perturbation=pert, alpha0=f["alpha0"])
    cfg = FluidConfig(fl["mu"], kp, grid, fl["dt"], fl["t_end"], forcing=forcing, initial_velocity=u0,
                      initial_pressure=p0, history_mode=fl["history_mode"], soe_tol=spec["kernel"]["soe_tol"],
                      memory=fl["memory"], advection=fl["advection"])
    return cfg, manufactured


# ---------------------------------------------------------------- builders
# Each returns a zero-argument callable that performs the work; building
# may raise ValueError (reported as a configuration error).

def _build_kernel_check(spec, out):
    k = spec["kernel"]
    kp = spec.kernel
    dt, n = k["dt"], k["n"]
    horizon = k["soe_horizon"] or n * dt
    if horizon < 2 * dt:
        raise ConfigError("kernel.soe_horizon must be at least 2*dt", "kernel.soe_horizon")

    def work():
        checks = []
        w = make_weights(kp, dt, n)
        w.to_csv(os.path.join(out, "weights.csv"))
        worst = 0.0
        for m in range(1, n + 1):
            ref = kernel_primitive(kp, 0.0, m * dt)
            worst = max(worst, abs(w.partial_sum(m) - ref) / ref)
        checks.append(Check("partial_sum_rel_error", worst, 1e-12, worst <= 1e-12))
        if kp.delta > 0:
            # the tail beyond delta*t = 50 is below 1e-16 of the total mass
            n_long = int(math.ceil(50.0 / (kp.delta * dt)))
            total = math.fsum(make_weights(kp, dt, n_long).omega)
            moment = kernel_moment(kp)
            err = abs(total - moment) / moment
            checks.append(Check("infinite_sum_rel_error", err, 1e-10, err <= 1e-10))
        lo, hi = weight_matrix_spectrum(w, min(n, 512))
        checks.append(Check("symmetrized_min_eig_ratio", lo / hi, -1e-12, lo >= -1e-12 * hi, ">="))
        cert = positivity_certificate(w, spec["analysis"]["trials"], spec.seed, min(n, 512))
        scale = w.omega[0] * dt
        checks.append(Check("positivity_certificate_ratio", cert / scale, -1e-12, cert >= -1e-12 * scale, ">="))
        tol = k["soe_tol"]
        try:
            soe = fit_soe(kp, dt, horizon, tol)
        except SoeFitError as exc:
            checks.append(Check("soe_certified_rel_error", exc.achieved, tol, False))
        else:
            with open(os.path.join(out, "soe.csv"), "w") as fh:
                fh.write("mode,amplitude,rate\n")
                for i, (a, lam) in enumerate(zip(soe.amplitudes, soe.rates)):
                    fh.write(f"{i},{_ff(a)},{_ff(lam)}\n")
            checks.append(Check("soe_certified_rel_error", soe.certified_rel_error, tol,
                                soe.certified_rel_error <= tol))
            checks.append(Check("soe_modes", soe.n_modes, 0, True, "info"))
        return checks

    return work


def _build_run_transient(spec, out):
    grid = _grid(spec)
    cfg, manufactured = _fluid_config(spec, grid)
    fl, fmt = spec["fluid"], spec["output"]["format"]
    snap_every = spec["output"]["snapshot_every"]
    if cfg.history_mode == "soe":
        cfg.soe  # fit before any output exists; SoeFitError is a configuration problem here

    def work():
        observer = None
        columns = DIAGNOSTIC_COLUMNS
        if manufactured is not None:
            def observer(state):
                e = state.velocity - manufactured.velocity(state.t)
                return {"err_l2": math.sqrt(inner(e, e, grid))}
            columns = DIAGNOSTIC_COLUMNS + ("err_l2",)
        result = run(cfg, cadence=fl["cadence"], observer=observer, snapshot_every=snap_every or None)
        write_diagnostics_csv(os.path.join(out, "diagnostics.csv"), result.records, columns)
        ext = "csv" if fmt == "csv" else "bin"
        if result.snapshots:
            sdir = os.path.join(out, "snapshots")
            os.makedirs(sdir, exist_ok=True)
            for s in result.snapshots:
                write_snapshot(os.path.join(sdir, f"velocity_{s.n:07d}.{ext}"), s.velocity, role="velocity",
                               time=s.t, fmt=fmt)
                write_snapshot(os.path.join(sdir, f"pressure_{s.n:07d}.{ext}"), s.pressure, grid,
                               role="pressure", time=s.t, fmt=fmt)
        st = result.state
        write_snapshot(os.path.join(out, f"velocity_final.{ext}"), st.velocity, role="velocity", time=st.t, fmt=fmt)
        write_snapshot(os.path.join(out, f"pressure_final.{ext}"), st.pressure, grid, role="pressure",
                       time=st.t, fmt=fmt)
        h = min(grid.hx, grid.hy)
        worst = 0.0
        for rec in result.records:
            scale = math.sqrt(rec["l2_sq"]) / h
            if rec["div_residual"] > 0.0:
                worst = max(worst, rec["div_residual"] / scale if scale > 0 else math.inf)
        checks = [Check("divergence_over_norm_per_h", worst, 1e-8, worst <= 1e-8)]
        if manufactured is not None:
            checks.append(Check("final_error_l2", result.records[-1]["err_l2"], 0, True, "info"))
        return checks

    return work


def _build_solve_steady(spec, out):
    grid = _grid(spec)
    scfg = _steady_config(spec, grid)
    fmt = spec["output"]["format"]

    def work():
        sol = solve_steady(scfg)
        write_solution(out, sol, fmt)
        with open(os.path.join(out, "residuals.csv"), "w") as fh:
            fh.write("iteration,residual\n")
            for i, r in enumerate(sol.residuals):
                fh.write(f"{i},{_ff(r)}\n")
        scale = scfg.tol * max(math.sqrt(inner(scfg.fbar, scfg.fbar, grid)), 1e-300)
        checks = [Check("relative_residual", sol.residual, scale, sol.residual <= scale)]
        d = sol.diagnostics
        if d:
            checks.append(Check("apriori_h1_over_bound", d["ubar_h1"] / max(d["apriori_bound"], 1e-300), 1.05,
                                bool(d["apriori_ok"])))
            checks.append(Check("uniqueness_indicator", d["uniqueness_indicator"], 1.0, True, "info"))
            checks.append(Check("mu0_est", d["mu0_est"], 0.0, True, "info"))
        return checks

    return work


def _build_decay_study(spec, out):
    grid = _grid(spec)
    scfg = _steady_config(spec, grid)
    tcfg, _ = _fluid_config(spec, grid)
    margin = spec["analysis"]["margin"]
    cadence = spec["fluid"]["cadence"]

    def work():
        rep = decay_study(tcfg, scfg, margin=margin, cadence=cadence)
        rep.write_csv(os.path.join(out, "decay.csv"))
        with open(os.path.join(out, "decay_series.csv"), "w") as fh:
            names = list(rep.values)
            fh.write(",".join(["t"] + names) + "\n")
            for i, t in enumerate(rep.times):
                fh.write(",".join([_ff(t)] + [_ff(rep.values[k][i]) for k in names]) + "\n")
        with open(os.path.join(out, "decay_report.txt"), "w") as fh:
            fh.write(rep.summary() + "\n")
        floor = 0.9 * rep.alpha_expect
        checks = []
        for name, s in rep.series.items():
            checks.append(Check(f"{name}_alpha", s.fit.alpha, floor, s.fit.alpha >= floor, ">="))
            checks.append(Check(f"{name}_r2", s.fit.r_squared, 0.98, s.fit.reliable, ">="))
            checks.append(Check(f"{name}_no_late_growth", float(s.bounded), 1.0, s.bounded, ">="))
        checks.append(Check("uniqueness_indicator", rep.steady.diagnostics.get("uniqueness_indicator", math.nan),
                            1.0, True, "info"))
        return checks

    return work


def _build_convergence_study(spec, out):
    a, f, fl = spec["analysis"], spec["forcing"], spec["fluid"]
    kp = spec.kernel
    if a["solver"] == "transient" and f["manufactured_alpha"] >= kp.delta:
        raise ConfigError("forcing.manufactured_alpha must be < kernel.delta", "forcing.manufactured_alpha")
    expected = a["expected_order"] or (2.0 if a["refine"] == "space" else 1.0)
    exact = f["discrete"] and a["solver"] == "steady"

    def work():
        rows = convergence_table(a["refine"], a["levels"], kp, mu=fl["mu"], base=a["base"], dt0=a["dt0"],
                                 t_end=fl["t_end"], alpha=f["manufactured_alpha"],
                                 amplitude=f["manufactured_amplitude"], solver=a["solver"], discrete=f["discrete"])
        with open(os.path.join(out, "convergence.csv"), "w") as fh:
            fh.write("level,h,dt,error,order\n")
            for r in rows:
                order = "" if r["order"] is None else _ff(r["order"])
                fh.write(f"{r['level']},{_ff(r['h'])},{_ff(r['dt'])},{_ff(r['error'])},{order}\n")
        if exact:
            worst = max(r["error"] for r in rows)
            tol = 1e-9 * max(abs(f["manufactured_amplitude"]), 1.0)
            return [Check("max_error_discrete_exact", worst, tol, worst <= tol)]
        last = rows[-1]["order"]
        dev = abs(last - expected)
        return [Check("observed_order", last, expected, True, "info"),
                Check("order_deviation", dev, a["order_tolerance"], dev <= a["order_tolerance"])]

    return work


BUILDERS = {
    "kernel-check": _build_kernel_check,
    "run-transient": _build_run_transient,
    "solve-steady": _build_solve_steady,
    "decay-study": _build_decay_study,
    "convergence-study": _build_convergence_study,
}


def _write_checks(out, spec, checks):
    with open(os.path.join(out, "checks.csv"), "w") as fh:
        fh.write("check,value,relation,threshold,pass\n")
        for c in checks:
            fh.write(f"{c.name},{_ff(c.value)},{c.relation},{_ff(c.threshold)},{str(bool(c.passed)).lower()}\n")
    ok = all(c.passed for c in checks)
    with open(os.path.join(out, "summary.txt"), "w") as fh:
        fh.write(f"experiment {spec.kind} seed {spec.seed}\n")
        for c in checks:
            tag = "INFO" if c.relation == "info" else ("PASS" if c.passed else "FAIL")
            fh.write(f"{tag} {c.name} = {c.value:.6g}"
                     + ("" if c.relation == "info" else f" ({c.relation} {c.threshold:.6g})") + "\n")
        fh.write(f"overall {'PASS' if ok else 'FAIL'}\n")
    return ok


def run_experiment(spec, out=None):
    """Run ``spec`` and write its artifacts; returns an :class:`Outcome`.

    ``out`` overrides the configured output directory.
    """
    out = out or spec.out
    if not out:
        return Outcome(EXIT_CONFIG, message="no output directory given")
    try:
        work = BUILDERS[spec.kind](spec, out)
    except ConfigError as exc:
        write_error_record(out, EXIT_CONFIG, str(exc), exc.key)
        return Outcome(EXIT_CONFIG, message=str(exc))
    except SoeFitError as exc:
        write_error_record(out, EXIT_CONFIG, str(exc), "kernel.soe_tol", {"achieved": exc.achieved})
        return Outcome(EXIT_CONFIG, message=str(exc))
    except (ValueError, TypeError) as exc:
        write_error_record(out, EXIT_CONFIG, str(exc))
        return Outcome(EXIT_CONFIG, message=str(exc))

    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "effective.cfg"), "w") as fh:
        fh.write(render(spec.with_overrides(out=out)))
    try:
        checks = work()
    except NUMERICAL_ERRORS as exc:
        extra = {}
        if isinstance(exc, SimulationError):
            extra = {"step_index": exc.step_index, "dump": exc.dump}
        elif isinstance(exc, IterationError):
            extra = {"residuals": [float(r) for r in exc.residuals]}
        elif isinstance(exc, SolverError):
            extra = {"residual": exc.residual}
        write_error_record(out, EXIT_NUMERICAL, f"{type(exc).__name__}: {exc}", extra=extra)
        return Outcome(EXIT_NUMERICAL, message=str(exc))
    ok = _write_checks(out, spec, checks)
    files = sorted(os.listdir(out))
    return Outcome(EXIT_PASS if ok else EXIT_FAIL, checks, files)
