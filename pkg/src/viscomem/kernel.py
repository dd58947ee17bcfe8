"""Discrete convolution with the memory kernel ``t**(-beta) * exp(-delta*t)``.

Weights are exact integrals of the kernel over uniform time intervals
(product integration with right-endpoint, piecewise-constant data).  Long
histories can be compressed into a sum of exponentials so that each step
costs O(number of modes) instead of O(number of steps).
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigvalsh, toeplitz
from scipy.special import roots_jacobi, roots_legendre

from .special import (
    _gamma_contfrac,
    gamma_fn,
    kernel_primitive,
    lower_incomplete_gamma,
    upper_incomplete_gamma,
)

__all__ = [
    "KernelParams",
    "QuadratureWeights",
    "SoeApproximation",
    "SoeFitError",
    "HistoryBuffer",
    "kernel_eval",
    "kernel_moment",
    "make_weights",
    "convolve_direct",
    "symmetrized_weight_matrix",
    "positivity_certificate",
    "fit_soe",
    "convolve_soe_step",
]


@dataclass(frozen=True)
class KernelParams:
    """Memory kernel ``rho * t**(-beta) * exp(-delta * t)``.

    ``delta = 0`` selects the pure power law; it is accepted here for
    kernel-level checks but the flow solvers require ``delta > 0``.
    ``rho = 0`` switches the memory off.
    """

    beta: float
    delta: float
    rho: float = 1.0

    def __post_init__(self):
        for name in ("beta", "delta", "rho"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must lie in [0,1), got {self.beta!r}")
        if self.delta < 0.0:
            raise ValueError(f"delta must be >= 0, got {self.delta!r}")
        if self.rho < 0.0:
            raise ValueError(f"rho must be >= 0, got {self.rho!r}")

    @classmethod
    def from_relaxation(cls, mu, lambda1, lambda2, beta=0.0):
        """Build from solvent viscosity and relaxation/retardation times."""
        if not 0.0 < lambda2 <= lambda1:
            raise ValueError("relaxation times must satisfy 0 < lambda2 <= lambda1")
        return cls(beta=beta, delta=1.0 / lambda1, rho=(mu / lambda1) * (lambda1 / lambda2 - 1.0))

    def with_rho(self, rho):
        return KernelParams(self.beta, self.delta, rho)


def kernel_eval(params, t):
    """Kernel value ``t**(-beta) * exp(-delta*t)`` (without ``rho``)."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0.0):
        raise ValueError("kernel_eval requires t > 0")
    out = t ** (-params.beta) * np.exp(-params.delta * t)
    return float(out) if out.ndim == 0 else out


def kernel_moment(params):
    """Total kernel mass ``Gamma(1-beta) / delta**(1-beta)``."""
    if params.delta <= 0.0:
        raise ValueError("kernel_moment requires delta > 0 (the pure power law has infinite mass)")
    a = 1.0 - params.beta
    return gamma_fn(a) / params.delta**a


@dataclass(frozen=True)
class QuadratureWeights:
    """Exact kernel integrals ``omega[k]`` over ``[k*dt, (k+1)*dt]``.

    ``underflow_index`` is the first ``k`` whose weight underflowed to zero
    (``None`` when all weights are representable).
    """

    params: KernelParams
    dt: float
    omega: np.ndarray
    underflow_index: int = None

    def __len__(self):
        return len(self.omega)

    def partial_sum(self, n):
        return math.fsum(self.omega[:n])

    def to_csv(self, path):
        """Write ``k, t_left, t_right, omega_k`` rows at 17 significant digits."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["k", "t_left", "t_right", "omega_k"])
            for k, w in enumerate(self.omega):
                writer.writerow([k, f"{k * self.dt:.17g}", f"{(k + 1) * self.dt:.17g}", f"{w:.17g}"])


def _primitive_nodes(params, dt, n):
    """Weights from one incomplete-gamma evaluation per grid node."""
    a = 1.0 - params.beta
    delta = params.delta
    scale = delta ** (-a)
    x = delta * dt * np.arange(n + 1)
    lower = np.empty(n + 1)
    upper = np.empty(n + 1)
    for k, xk in enumerate(x):
        if xk >= a + 1.0:
            upper[k] = _gamma_contfrac(a, xk) if xk < 745.0 else 0.0
            lower[k] = np.nan
        else:
            lower[k] = lower_incomplete_gamma(a, xk)
            upper[k] = np.nan
    omega = np.empty(n)
    for k in range(n):
        if x[k] >= a + 1.0:
            omega[k] = upper[k] - upper[k + 1]
        elif x[k + 1] >= a + 1.0:
            omega[k] = upper_incomplete_gamma(a, x[k]) - upper[k + 1]
        else:
            omega[k] = lower[k + 1] - lower[k]
    return scale * np.maximum(omega, 0.0)


def make_weights(params, dt, n):
    """Product-integration weights for ``n`` intervals of width ``dt``."""
    dt = float(dt)
    n = int(n)
    if not dt > 0.0:
        raise ValueError(f"dt must be > 0, got {dt!r}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n!r}")
    if params.delta == 0.0:
        a = 1.0 - params.beta
        nodes = (dt * np.arange(n + 1)) ** a
        omega = np.diff(nodes) / a
    else:
        omega = _primitive_nodes(params, dt, n)
    zeros = np.flatnonzero(omega == 0.0)
    underflow = int(zeros[0]) if zeros.size else None
    omega.setflags(write=False)
    return QuadratureWeights(params, dt, omega, underflow)


def convolve_direct(weights, history):
    """``sum_j omega[n-j] * y_j`` for samples ``y_1..y_n`` (right endpoints).

    ``history`` has the time axis first; trailing axes (fields) are kept.
    """
    y = np.asarray(history, dtype=float)
    n = y.shape[0]
    if n == 0:
        raise ValueError("history must contain at least one sample")
    if n > len(weights.omega):
        raise ValueError(f"history has {n} samples but only {len(weights.omega)} weights")
    w = weights.omega[:n][::-1]
    return np.tensordot(w, y, axes=(0, 0))


def symmetrized_weight_matrix(weights, n=None):
    """Symmetric part of the lower-triangular Toeplitz convolution matrix."""
    n = len(weights.omega) if n is None else int(n)
    col = np.array(weights.omega[:n], dtype=float)
    col[1:] *= 0.5
    return toeplitz(col)


def positivity_certificate(weights, trials, seed, n=None):
    """Smallest sampled value of the discrete memory quadratic form.

    For ``trials`` seeded standard-normal vectors ``phi`` the double sum
    ``sum_n sum_{j<=n} omega[n-j] phi_j phi_n * dt / |phi|^2`` is evaluated;
    a nonnegative minimum certifies discrete positivity on those samples.
    """
    n = len(weights.omega) if n is None else int(n)
    trials = int(trials)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    phi = rng.standard_normal((trials, n))
    lower = toeplitz(weights.omega[:n], np.zeros(n))
    vals = np.einsum("ti,ij,tj->t", phi, lower, phi) * weights.dt
    return float(np.min(vals / np.einsum("ti,ti->t", phi, phi)))


def weight_matrix_spectrum(weights, n=None):
    """(min, max) eigenvalue of the symmetrized weight matrix."""
    ev = eigvalsh(symmetrized_weight_matrix(weights, n))
    return float(ev[0]), float(ev[-1])


class SoeFitError(RuntimeError):
    """No sum-of-exponentials within the mode budget meets the tolerance."""

    def __init__(self, message, achieved):
        super().__init__(message)
        self.achieved = achieved


@dataclass(frozen=True)
class SoeApproximation:
    """``K(t) ~ sum_i amplitudes[i] * exp(-rates[i] * t)`` on ``[valid_from, horizon]``."""

    amplitudes: np.ndarray
    rates: np.ndarray
    valid_from: float
    horizon: float
    certified_rel_error: float
    params: KernelParams = field(repr=False, default=None)

    @property
    def n_modes(self):
        return len(self.rates)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-np.multiply.outer(t, self.rates)) @ self.amplitudes


def _soe_candidate(beta, s_lo, s_hi, n_jacobi, q, width):
    # t**(-beta) = 1/Gamma(beta) * int_0^inf s**(beta-1) exp(-s t) ds,
    # Gauss-Jacobi on [0, s_lo], Gauss-Legendre in log s on octave blocks above
    x, w = roots_jacobi(n_jacobi, 0.0, beta - 1.0)
    rates = [s_lo * (1.0 + x) / 2.0]
    amps = [w * (s_lo / 2.0) ** beta]
    gx, gw = roots_legendre(q)
    length = width * math.log(2.0)
    nblocks = max(1, int(math.ceil(math.log(s_hi / s_lo) / length)))
    x0 = math.log(s_lo) + length * np.arange(nblocks)
    xx = (x0[:, None] + (gx[None, :] + 1.0) * length / 2.0).ravel()
    ww = np.tile(gw * length / 2.0, nblocks)
    rates.append(np.exp(xx))
    amps.append(ww * np.exp(beta * xx))
    return np.concatenate(amps) / gamma_fn(beta), np.concatenate(rates)


def _soe_rel_error(beta, amps, rates, t):
    # relative error is unchanged by the common exp(-delta t) factor
    approx = np.exp(-np.multiply.outer(t, rates)) @ amps
    return float(np.max(np.abs(approx * t**beta - 1.0)))


def fit_soe(params, dt, horizon, tol, max_modes=128, n_check=10_000):
    """Sum-of-exponentials approximation of the kernel on ``[dt, horizon]``.

    The power factor is written as a Laplace integral and discretized by
    Gauss-Jacobi quadrature near the origin and Gauss-Legendre quadrature in
    ``log s`` on blocks of octaves; all rates are then shifted by ``delta``.
    Among the candidate discretizations the one with the fewest modes whose
    relative error on a dense logarithmic check grid is below ``tol`` wins.
    """
    dt = float(dt)
    horizon = float(horizon)
    if not dt > 0.0:
        raise ValueError("dt must be > 0")
    if not horizon > dt:
        raise ValueError("horizon must exceed dt")
    if not 1e-12 < tol < 1e-2:
        raise ValueError("tol must lie in (1e-12, 1e-2)")
    beta, delta = params.beta, params.delta
    if delta <= 0.0:
        raise ValueError("fit_soe requires delta > 0")
    if beta == 0.0:
        return SoeApproximation(np.array([1.0]), np.array([delta]), dt, horizon, 0.0, params)

    # truncation of the Laplace integral at large s: Gamma(beta, s_hi dt)/Gamma(beta) <= tol/4
    g = gamma_fn(beta)
    lo, hi = 1.0, 2.0
    while upper_incomplete_gamma(beta, hi) / g > tol / 4.0:
        hi *= 2.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if upper_incomplete_gamma(beta, mid) / g > tol / 4.0:
            lo = mid
        else:
            hi = mid
    s_hi = hi / dt
    s_lo = 4.0 / horizon

    coarse = np.geomspace(dt, horizon, 2000)
    candidates = []
    best_err = math.inf
    for width in (4, 3, 2, 1):
        for q in range(2, 17):
            for n_jacobi in range(2, 17):
                amps, rates = _soe_candidate(beta, s_lo, s_hi, n_jacobi, q, width)
                if len(rates) > max_modes:
                    break
                err = _soe_rel_error(beta, amps, rates, coarse)
                best_err = min(best_err, err)
                if err <= 0.5 * tol:
                    candidates.append((len(rates), width, q, n_jacobi, amps, rates))
                    break
    candidates.sort(key=lambda c: c[:4])
    check = np.unique(np.concatenate([np.geomspace(dt, horizon, n_check), np.linspace(dt, horizon, n_check)]))
    for _, _, _, _, amps, rates in candidates:
        err = _soe_rel_error(beta, amps, rates, check)
        best_err = min(best_err, err)
        if err <= tol:
            return SoeApproximation(amps, rates + delta, dt, horizon, err, params)
    raise SoeFitError(
        f"no sum of exponentials with <= {max_modes} modes reaches tol={tol:g} "
        f"(best achieved {best_err:.3g})",
        best_err,
    )


class HistoryBuffer:
    """Past samples of a convolved quantity.

    In ``direct`` mode every completed step's sample is stored; in
    ``compressed`` mode one accumulator per exponential mode is kept,
    obeying ``s_m <- exp(-lambda_m dt) s_m + y``.
    """

    def __init__(self, weights, mode="direct", soe=None, shape=()):
        if mode not in ("direct", "compressed"):
            raise ValueError(f"unknown history mode {mode!r}")
        if mode == "compressed" and soe is None:
            raise ValueError("compressed mode needs an SoeApproximation")
        self.weights = weights
        self.dt = weights.dt
        self.mode = mode
        self.soe = soe
        self.shape = tuple(shape)
        self.n = 0
        size = int(np.prod(self.shape, dtype=int))
        if mode == "direct":
            self._samples = np.zeros((16, size))
        else:
            if soe.valid_from > self.dt * (1.0 + 1e-12):
                raise ValueError("SOE approximation is not valid from the first lagged interval")
            lam = soe.rates
            self._decay = np.exp(-lam * self.dt)
            # integral of one mode over an interval [k dt, (k+1) dt], k >= 1, divided by exp(-lam (k-1) dt)
            self._coef = soe.amplitudes * self._decay * (-np.expm1(-lam * self.dt)) / lam
            self._acc = np.zeros((len(lam), size))

    def __len__(self):
        return self.n

    @property
    def samples(self):
        if self.mode != "direct":
            raise AttributeError("compressed buffers do not keep samples")
        return self._samples[: self.n].reshape((self.n,) + self.shape)

    def lagged_sum(self):
        """``sum_{j=1}^{n} omega[n+1-j] * y_j`` over the stored samples."""
        if self.n == 0:
            return np.zeros(self.shape)
        if self.mode == "direct":
            if self.n + 1 > len(self.weights.omega):
                raise ValueError("weight table is shorter than the history")
            w = self.weights.omega[self.n : 0 : -1]
            out = w @ self._samples[: self.n]
        else:
            out = self._coef @ self._acc
        return out.reshape(self.shape)

    def append(self, sample):
        y = np.asarray(sample, dtype=float).reshape(-1)
        if self.mode == "direct":
            if self.n == len(self._samples):
                grown = np.zeros((2 * len(self._samples), self._samples.shape[1]))
                grown[: self.n] = self._samples
                self._samples = grown
            self._samples[self.n] = y
        else:
            self._acc *= self._decay[:, None]
            self._acc += y[None, :]
        self.n += 1

    def push(self, sample):
        """Append ``sample`` as ``y_n`` and return the convolution at step ``n``."""
        y = np.asarray(sample, dtype=float)
        value = self.weights.omega[0] * y.reshape(self.shape) + self.lagged_sum()
        self.append(y)
        return value

    def copy(self):
        other = object.__new__(HistoryBuffer)
        other.__dict__.update(self.__dict__)
        if self.mode == "direct":
            other._samples = self._samples.copy()
        else:
            other._acc = self._acc.copy()
        return other


def convolve_soe_step(history, sample, dt):
    """One compressed-history step; returns ``(history, convolution value)``."""
    if history.mode != "compressed":
        raise ValueError("convolve_soe_step needs a compressed HistoryBuffer")
    if not math.isclose(dt, history.dt, rel_tol=1e-12):
        raise ValueError(f"time step {dt!r} does not match the buffer's {history.dt!r}")
    value = history.push(sample)
    return history, value

