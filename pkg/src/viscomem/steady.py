"""Steady flow with the memory folded into an effective viscosity.

At steady state the memory term integrates to ``rho * Gamma(1-beta) /
delta**(1-beta) * Lap u``, so the problem is stationary Navier-Stokes with
viscosity ``mu + rho * Gamma(1-beta) / delta**(1-beta)``.  It is solved by
Stokes (Picard) iteration or by Newton's method preconditioned with the
Stokes solve.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg, gmres

from .kernel import KernelParams, kernel_moment
from .mac import (
    SolverError,
    StaggeredGrid,
    VelocityField,
    advect,
    advection_matrix,
    divergence,
    gradient,
    helmholtz_solve,
    inner,
    laplacian,
    leray_project,
    mu0_estimate,
    norms,
    write_snapshot,
)

__all__ = [
    "IterationError",
    "SteadyConfig",
    "SteadySolution",
    "effective_viscosity",
    "stokes_solve",
    "steady_residual",
    "solve_stokes_iteration",
    "solve_newton",
    "solve_steady",
    "dual_norm",
    "trilinear_sup_estimate",
    "uniqueness_indicator",
    "write_solution",
]


class IterationError(RuntimeError):
    """Nonlinear iteration failed; carries the residual history."""

    def __init__(self, message, residuals):
        super().__init__(message)
        self.residuals = list(residuals)


def effective_viscosity(mu, kernel):
    """``mu + rho * Gamma(1-beta) / delta**(1-beta)``."""
    if kernel.rho == 0.0:
        return float(mu)
    return float(mu) + kernel.rho * kernel_moment(kernel)


@dataclass(eq=False)
class SteadyConfig:
    mu: float
    kernel: KernelParams
    grid: StaggeredGrid
    fbar: VelocityField
    method: str = "stokes_iteration"
    tol: float = 1e-10
    max_iters: int = 200
    diagnostics: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.mu > 0.0:
            raise ValueError(f"mu must be > 0, got {self.mu!r}")
        if not self.kernel.delta > 0.0:
            raise ValueError("the flow model needs delta > 0")
        if not self.tol > 0.0:
            raise ValueError("tol must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.method not in ("stokes_iteration", "newton"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.fbar.grid != self.grid:
            raise ValueError("fbar lives on a different grid")

    @property
    def nu_eff(self):
        return effective_viscosity(self.mu, self.kernel)


@dataclass(eq=False)
class SteadySolution:
    velocity: VelocityField
    pressure: np.ndarray
    residual: float
    iterations: int
    nu_eff: float
    residuals: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)


def stokes_solve(nu, rhs, rtol=1e-13, maxiter=2000):
    """Solve ``nu (-Lap_h) u + grad p = rhs``, ``div u = 0``.

    Conjugate gradients on the pressure Schur complement
    ``D (-Lap_h)^{-1} D^T``; every application is one fast Dirichlet solve.
    Returns ``(u, p)`` with mean-zero ``p``.
    """
    g = rhs.grid
    D = g.div_matrix

    def a_inv(data):
        return helmholtz_solve(0.0, 1.0, VelocityField(g, data)).data

    def schur(p):
        p = p - p.mean()
        out = D @ a_inv(D.T @ p)
        return out - out.mean()

    b = -(D @ a_inv(rhs.data))
    b -= b.mean()
    if np.linalg.norm(b) == 0.0:
        p = np.zeros(g.ncell)
    else:
        op = LinearOperator((g.ncell, g.ncell), matvec=schur, dtype=float)
        p, info = cg(op, b, rtol=rtol, atol=0.0, maxiter=maxiter)
        if info != 0:
            res = np.linalg.norm(schur(p) - b) / np.linalg.norm(b)
            if res > 1e3 * rtol:
                raise SolverError(f"Stokes Schur-complement CG did not converge (residual {res:.3g})", res)
        p -= p.mean()
    u = VelocityField(g, a_inv(rhs.data + D.T @ p) / nu)
    return u, p.reshape(g.nx, g.ny)


def steady_residual(u, nu, fbar):
    """``|| P(nu (-Lap_h) u + advect(u, u) - fbar) ||_0``; pressure-free."""
    r = leray_project(nu * (-laplacian(u)) + advect(u, u) - fbar)
    return math.sqrt(inner(r, r, u.grid))


def _scale(config):
    return max(norms(config.fbar)["l2"], 1e-300)


def _check_divergence(residuals, k):
    if len(residuals) >= 6 and all(residuals[i + 1] > residuals[i] for i in range(-6, -1)):
        return f"residual grew for 5 consecutive iterations (iteration {k})"
    if residuals[-1] > 1e6 * max(residuals[0], 1e-300):
        return f"residual exceeded 1e6 times its initial value (iteration {k})"
    return None


def solve_stokes_iteration(config, initial=None, max_iters=None):
    """Picard iteration with the advection lagged into the right-hand side."""
    nu = config.nu_eff
    f = config.fbar
    stop = config.tol * _scale(config)
    u = VelocityField.zeros(config.grid) if initial is None else initial.copy()
    p = np.zeros((config.grid.nx, config.grid.ny))
    residuals = []
    iters = config.max_iters if max_iters is None else max_iters
    for k in range(1, iters + 1):
        u, p = stokes_solve(nu, f - advect(u, u))
        residuals.append(steady_residual(u, nu, f))
        if residuals[-1] <= stop:
            return _finish(config, u, p, residuals, k)
        reason = _check_divergence(residuals, k)
        if reason:
            raise IterationError(f"Stokes iteration diverged: {reason}", residuals)
    if max_iters is not None:
        return _finish(config, u, p, residuals, iters, converged=False)
    raise IterationError(
        f"Stokes iteration did not reach {stop:.3g} in {iters} iterations (last {residuals[-1]:.3g})", residuals
    )


def solve_newton(config, stokes_warmup=2):
    """Newton's method; each linearized step is solved by GMRES on
    ``(I + S^{-1} J') du = -S^{-1} R`` with the Stokes solve ``S^{-1}``."""
    nu = config.nu_eff
    f = config.fbar
    g = config.grid
    stop = config.tol * _scale(config)
    warm = solve_stokes_iteration(config, max_iters=stokes_warmup)
    u = warm.velocity
    residuals = list(warm.residuals)
    if residuals and residuals[-1] <= stop:
        return _finish(config, u, warm.pressure, residuals, len(residuals))
    for k in range(1, config.max_iters + 1):
        rvec = nu * (-laplacian(u)) + advect(u, u) - f
        jac = advection_matrix(a=u) + advection_matrix(w=u)
        rhs, _ = stokes_solve(nu, -rvec)

        def matvec(x):
            du, _ = stokes_solve(nu, VelocityField(g, jac @ x))
            return x + du.data

        op = LinearOperator((g.size, g.size), matvec=matvec, dtype=float)
        # inexact Newton: forcing term proportional to the residual keeps the quadratic rate
        eta = min(1e-2, max(1e-12, 0.1 * residuals[-1] / _scale(config)))
        x, info = gmres(op, rhs.data, rtol=eta, atol=0.0, restart=40, maxiter=5)
        if info != 0:
            res = np.linalg.norm(matvec(x) - rhs.data) / max(np.linalg.norm(rhs.data), 1e-300)
            if res > 0.5:
                raise IterationError(f"Jacobian solve failed at Newton step {k} (relative residual {res:.3g})",
                                     residuals)
        u = u + VelocityField(g, x)
        residuals.append(steady_residual(u, nu, f))
        if residuals[-1] <= stop:
            # one Stokes solve recovers the pressure belonging to u
            _, p = stokes_solve(nu, f - advect(u, u))
            return _finish(config, u, p, residuals, len(residuals))
        reason = _check_divergence(residuals, k)
        if reason:
            raise IterationError(f"Newton iteration diverged: {reason}", residuals)
    raise IterationError(f"Newton iteration did not converge in {config.max_iters} steps", residuals)


def solve_steady(config):
    if config.method == "newton":
        return solve_newton(config)
    return solve_stokes_iteration(config)


def dual_norm(fbar):
    """Discrete ``||f||_{-1} = sup_v (f, v) / |v|_1``, attained at ``v = (-Lap_h)^{-1} f``."""
    w = helmholtz_solve(0.0, 1.0, fbar)
    return math.sqrt(max(inner(fbar, w, fbar.grid), 0.0))


def _random_smooth(grid, rng):
    noise = VelocityField(grid, rng.standard_normal(grid.size))
    return helmholtz_solve(0.0, 1.0, noise)


def trilinear_sup_estimate(grid, samples=32, seed=0, sweeps=4):
    """Sampled lower bound for ``sup b(u, v, w) / (|u|_1 |v|_1 |w|_1)``.

    Each sample starts from seeded smooth random ``u``, ``v`` and then
    alternately maximizes over ``w``, ``v`` and ``u`` (each is a linear
    problem whose maximizer is ``(-Lap_h)^{-1}`` of the gradient).
    """
    rng = np.random.default_rng(seed)

    def h1(x):
        return norms(x)["h1_semi"]

    best = 0.0
    for _ in range(int(samples)):
        u = _random_smooth(grid, rng)
        v = _random_smooth(grid, rng)
        for _ in range(max(int(sweeps), 1)):
            w = helmholtz_solve(0.0, 1.0, advect(u, v))
            # b(u, v, w) = -b(u, w, v): the maximizing v is A^{-1} of -advect(u, w)
            v = helmholtz_solve(0.0, 1.0, -advect(u, w))
            v = v / h1(v)
            grad_u = VelocityField(grid, advection_matrix(w=v).T @ w.data)
            u = helmholtz_solve(0.0, 1.0, grad_u)
            u = u / h1(u)
        ratio = dual_norm(advect(u, v)) / (h1(u) * h1(v))
        best = max(best, ratio)
    return best


def uniqueness_indicator(solution, config, samples=32, seed=None, n_h=None):
    """``N_h ||fbar||_{-1} / nu_eff**2``; below 1 is the small-data regime."""
    if n_h is None:
        n_h = trilinear_sup_estimate(config.grid, samples, config.seed if seed is None else seed)
    return n_h * dual_norm(config.fbar) / config.nu_eff**2


def _finish(config, u, p, residuals, iterations, converged=True):
    nu = config.nu_eff
    sol = SteadySolution(u, p, residuals[-1] if residuals else 0.0, iterations, nu, residuals)
    if not (converged and config.diagnostics):
        return sol
    fd = dual_norm(config.fbar)
    h1 = norms(u)["h1_semi"]
    n_h = trilinear_sup_estimate(config.grid, 32, config.seed)
    bound = fd / nu
    sol.diagnostics = {
        "ubar_h1": h1,
        "fbar_dual": fd,
        "apriori_bound": bound,
        "apriori_ok": h1 <= 1.05 * bound,
        "mu0_est": mu0_estimate(u, config.mu, trials=8, seed=config.seed),
        "n_h": n_h,
        "n_h_samples": 32,
        "uniqueness_indicator": n_h * fd / nu**2,
        "max_div": float(np.abs(divergence(u)).max()),
    }
    if not sol.diagnostics["apriori_ok"]:
        warnings.warn(f"a-priori bound violated: |u|_1={h1:.6g} > 1.05*{bound:.6g}", RuntimeWarning, stacklevel=3)
    return sol


def write_solution(outdir, solution, fmt="csv"):
    """Velocity/pressure snapshots plus ``summary.csv`` (key,value rows)."""
    import os

    os.makedirs(outdir, exist_ok=True)
    ext = "csv" if fmt == "csv" else "bin"
    write_snapshot(os.path.join(outdir, f"ubar.{ext}"), solution.velocity, role="steady-velocity", fmt=fmt)
    write_snapshot(os.path.join(outdir, f"pbar.{ext}"), solution.pressure, solution.velocity.grid,
                   role="steady-pressure", fmt=fmt)
    rows = {"residual": solution.residual, "iterations": solution.iterations, "nu_eff": solution.nu_eff}
    rows.update(solution.diagnostics)
    with open(os.path.join(outdir, "summary.csv"), "w") as fh:
        fh.write("key,value\n")
        for key, val in rows.items():
            text = f"{val:.17g}" if isinstance(val, float) else str(val)
            fh.write(f"{key},{text}\n")
