"""Gamma-type special functions used to integrate the memory kernel exactly.

The kernel ``tau**(-beta) * exp(-delta * tau)`` has the antiderivative
``delta**(beta - 1) * lower_gamma(1 - beta, delta * tau)``, so every weight,
moment and tail in the package is reduced to the functions below.
"""

import math

__all__ = [
    "gamma_fn",
    "lower_incomplete_gamma",
    "upper_incomplete_gamma",
    "kernel_primitive",
    "kernel_tail",
]

_EPS = 1e-17
_MAX_TERMS = 10_000
_TINY = 1e-300


def gamma_fn(z):
    """Gamma function for positive real ``z``."""
    z = float(z)
    if not z > 0.0:
        raise ValueError(f"gamma_fn requires z > 0, got {z!r}")
    return math.gamma(z)


def _prefactor(a, x):
    # exp(-x) * x**a, evaluated in log space to survive large x
    return math.exp(a * math.log(x) - x)


def _gamma_series(a, x):
    """Lower incomplete gamma by its power series; good for x < a + 1."""
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_TERMS):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            return total * _prefactor(a, x)
    raise ArithmeticError(f"incomplete gamma series did not converge (a={a}, x={x})")


def _gamma_contfrac(a, x):
    """Upper incomplete gamma by Lentz's continued fraction; good for x >= a + 1."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_TERMS):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        step = d * c
        h *= step
        if abs(step - 1.0) < _EPS:
            return h * _prefactor(a, x)
    raise ArithmeticError(f"incomplete gamma continued fraction did not converge (a={a}, x={x})")


def _check_args(a, x):
    a = float(a)
    x = float(x)
    if not a > 0.0:
        raise ValueError(f"incomplete gamma requires a > 0, got {a!r}")
    if not x >= 0.0:
        raise ValueError(f"incomplete gamma requires x >= 0, got {x!r}")
    return a, x


def lower_incomplete_gamma(a, x):
    """Non-regularized lower incomplete gamma ``int_0^x s**(a-1) exp(-s) ds``.

    Uses the power series below ``x = a + 1`` and the continued fraction for
    the complement above it.
    """
    a, x = _check_args(a, x)
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return math.gamma(a)
    if x < a + 1.0:
        return _gamma_series(a, x)
    return math.gamma(a) - _gamma_contfrac(a, x)


def upper_incomplete_gamma(a, x):
    """Non-regularized upper incomplete gamma ``int_x^inf s**(a-1) exp(-s) ds``."""
    a, x = _check_args(a, x)
    if x == 0.0:
        return math.gamma(a)
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return math.gamma(a) - _gamma_series(a, x)
    return _gamma_contfrac(a, x)


def _power_primitive(beta, t0, t1):
    if math.isinf(t1):
        return math.inf
    a = 1.0 - beta
    return (t1**a - t0**a) / a


def kernel_primitive(params, t0, t1):
    """Integral of ``tau**(-beta) * exp(-delta * tau)`` over ``[t0, t1]``.

    ``t1`` may be ``math.inf``. With ``params.delta == 0`` the pure power
    law is integrated in closed form.
    """
    t0 = float(t0)
    t1 = float(t1)
    if not 0.0 <= t0:
        raise ValueError(f"kernel_primitive requires t0 >= 0, got {t0!r}")
    if t0 > t1:
        raise ValueError(f"kernel_primitive requires t0 <= t1, got ({t0!r}, {t1!r})")
    beta, delta = params.beta, params.delta
    if t0 == t1:
        return 0.0
    if delta == 0.0:
        return _power_primitive(beta, t0, t1)
    a = 1.0 - beta
    x0, x1 = delta * t0, delta * t1
    scale = delta ** (-a)
    if x0 >= a + 1.0:
        # both ends in the tail: difference of upper functions avoids
        # cancellation against Gamma(a)
        return scale * max(_gamma_contfrac(a, x0) - upper_incomplete_gamma(a, x1), 0.0)
    return scale * max(lower_incomplete_gamma(a, x1) - lower_incomplete_gamma(a, x0), 0.0)


def kernel_tail(params, t):
    """Memory mass not yet seen at time ``t``: ``rho * int_t^inf K``.

    Equals ``rho * delta**(beta-1) * Gamma(1-beta, delta*t)``; at ``t = 0`` it
    is the full kernel moment times ``rho``.
    """
    t = float(t)
    if not t >= 0.0:
        raise ValueError(f"kernel_tail requires t >= 0, got {t!r}")
    if params.delta <= 0.0:
        raise ValueError("kernel_tail requires delta > 0")
    a = 1.0 - params.beta
    return params.rho * params.delta ** (-a) * upper_incomplete_gamma(a, params.delta * t)
