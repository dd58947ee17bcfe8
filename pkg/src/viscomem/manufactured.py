"""Closed-form velocity/pressure profiles and their forcings.

The velocity profile is the curl of the stream function
``psi = X(x) Y(y)`` with ``X(s) = (s/L)^2 (1 - s/L)^2``, which is
divergence-free and vanishes with its tangential component on the walls.
"""

import math

import numpy as np
from numpy.polynomial import Polynomial

from .kernel import KernelParams
from .mac import VelocityField, advect, gradient, laplacian
from .special import lower_incomplete_gamma

__all__ = ["StreamProfile", "ManufacturedSolution", "memory_factor", "PROFILES", "named_profile"]


def _bump(length):
    s = Polynomial([0.0, 1.0 / length])
    return (s**2) * (1.0 - s) ** 2


class StreamProfile:
    """Velocity ``curl psi`` and pressure ``(x - Lx/2)(y - Ly/2)``, scaled."""

    def __init__(self, grid, amplitude=1.0):
        self.grid = grid
        self.amplitude = float(amplitude)
        X, Y = _bump(grid.Lx), _bump(grid.Ly)
        self._x = [X.deriv(k) if k else X for k in range(4)]
        self._y = [Y.deriv(k) if k else Y for k in range(4)]

    def _sample(self, fu, fv):
        return VelocityField.from_functions(self.grid, fu, fv) * self.amplitude

    def velocity(self, discrete=False):
        """Pointwise curl samples, or with ``discrete=True`` differences of
        ``psi`` between grid nodes (exactly discretely divergence-free)."""
        X, Y = self._x, self._y
        if not discrete:
            return self._sample(lambda x, y: X[0](x) * Y[1](y), lambda x, y: -X[1](x) * Y[0](y))
        g = self.grid
        hx, hy = g.hx, g.hy
        return self._sample(
            lambda x, y: X[0](x) * (Y[0](y + hy / 2) - Y[0](y - hy / 2)) / hy,
            lambda x, y: -(X[0](x + hx / 2) - X[0](x - hx / 2)) / hx * Y[0](y),
        )

    def laplacian(self):
        X, Y = self._x, self._y
        return self._sample(
            lambda x, y: X[2](x) * Y[1](y) + X[0](x) * Y[3](y),
            lambda x, y: -(X[3](x) * Y[0](y) + X[1](x) * Y[2](y)),
        )

    def convection(self):
        """``(U.grad) U`` for the scaled profile."""
        X, Y = self._x, self._y
        a = self.amplitude**2
        fu = lambda x, y: (X[0](x) * Y[1](y)) * (X[1](x) * Y[1](y)) - (X[1](x) * Y[0](y)) * (X[0](x) * Y[2](y))
        fv = lambda x, y: -(X[0](x) * Y[1](y)) * (X[2](x) * Y[0](y)) + (X[1](x) * Y[0](y)) * (X[1](x) * Y[1](y))
        return VelocityField.from_functions(self.grid, fu, fv) * a

    def pressure(self):
        g = self.grid
        xc, yc = g.cell_coords()
        return self.amplitude * (xc - g.Lx / 2) * (yc - g.Ly / 2)

    def pressure_gradient(self):
        g = self.grid
        return self._sample(lambda x, y: y - g.Ly / 2, lambda x, y: x - g.Lx / 2)


def memory_factor(params, alpha, t):
    """``int_0^t K(t-s) exp(-alpha s) ds`` in closed form (needs alpha < delta)."""
    if not alpha < params.delta:
        raise ValueError(f"closed-form memory needs alpha < delta, got alpha={alpha!r}")
    if t == 0.0:
        return 0.0
    rate = params.delta - alpha
    a = 1.0 - params.beta
    return math.exp(-alpha * t) * rate ** (-a) * lower_incomplete_gamma(a, rate * t)


class ManufacturedSolution:
    """``u = U(x,y) e^{-alpha t}``, ``p = Pi(x,y) e^{-alpha t}`` and the forcing that makes them exact.

    With ``discrete=True`` the spatial derivatives in the forcing are the
    grid operators applied to the divergence-free samples of ``U``, so the
    semi-discrete system is solved exactly by ``U_h e^{-alpha t}`` and only
    time-stepping error remains.
    """

    def __init__(self, grid, kernel: KernelParams, mu, alpha=0.25, amplitude=1.0, discrete=False):
        if not alpha < kernel.delta:
            raise ValueError(f"unsupported profile: need alpha < delta (alpha={alpha}, delta={kernel.delta})")
        self.grid = grid
        self.kernel = kernel
        self.mu = float(mu)
        self.alpha = float(alpha)
        self.discrete = bool(discrete)
        self.profile = StreamProfile(grid, amplitude)
        self._P = self.profile.pressure()
        if self.discrete:
            self._U = self.profile.velocity(discrete=True)
            self._lapU = laplacian(self._U)
            self._conv = advect(self._U, self._U)
            self._gradP = gradient(self._P, grid)
        else:
            self._U = self.profile.velocity()
            self._lapU = self.profile.laplacian()
            self._conv = self.profile.convection()
            self._gradP = self.profile.pressure_gradient()

    def time_factor(self, t):
        return math.exp(-self.alpha * t)

    def velocity(self, t):
        return self._U * self.time_factor(t)

    def initial_velocity(self):
        """Discretely divergence-free version of ``velocity(0)``."""
        return self.profile.velocity(discrete=True)

    def pressure(self, t):
        return self._P * self.time_factor(t)

    def memory(self, t):
        return memory_factor(self.kernel, self.alpha, t)

    def forcing(self, t):
        g = self.time_factor(t)
        return (
            self._U * (-self.alpha * g)
            - self._lapU * (self.mu * g)
            + self._conv * g**2
            - self._lapU * (self.kernel.rho * self.memory(t))
            + self._gradP * g
        )


def _discrete_curl(grid, psi):
    # node differences of a stream function vanishing on the walls
    hx, hy = grid.hx, grid.hy
    return VelocityField.from_functions(
        grid,
        lambda x, y: (psi(x, y + hy / 2) - psi(x, y - hy / 2)) / hy,
        lambda x, y: -(psi(x + hx / 2, y) - psi(x - hx / 2, y)) / hx,
    )


def _sines(grid, amplitude):
    # stream function sin^2(pi x/Lx) sin^2(pi y/Ly): a second smooth no-slip field
    Lx, Ly = grid.Lx, grid.Ly
    psi = lambda x, y: np.sin(np.pi * x / Lx) ** 2 * np.sin(np.pi * y / Ly) ** 2
    return _discrete_curl(grid, psi) * amplitude


def _shear(grid, amplitude):
    # body force that is not divergence-free, so the pressure is exercised
    fu = lambda x, y: np.sin(np.pi * y / grid.Ly) + 0.0 * x
    fv = lambda x, y: np.cos(np.pi * x / grid.Lx) * (y / grid.Ly)
    return VelocityField.from_functions(grid, fu, fv) * amplitude


PROFILES = {
    "zero": lambda grid, amp: VelocityField.zeros(grid),
    "poly": lambda grid, amp: StreamProfile(grid, amp).velocity(discrete=True),
    "sines": _sines,
    "shear": _shear,
}


def named_profile(name, grid, amplitude=1.0):
    """Face field by name: ``zero``, ``poly``, ``sines`` (both discretely
    divergence-free) or ``shear`` (not divergence-free)."""
    try:
        return PROFILES[name](grid, amplitude)
    except KeyError:
        raise ValueError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None
