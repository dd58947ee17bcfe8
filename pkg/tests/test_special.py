import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from viscomem.kernel import KernelParams
from viscomem.special import (
    gamma_fn,
    kernel_primitive,
    kernel_tail,
    lower_incomplete_gamma,
    upper_incomplete_gamma,
)


@pytest.mark.parametrize(
    "z, expected",
    [(1.0, 1.0), (0.5, 1.7724538509055160), (2.5, 1.3293403881791370)],
)
def test_gamma_known_values(z, expected):
    assert gamma_fn(z) == pytest.approx(expected, rel=1e-13)


@pytest.mark.parametrize("z", np.linspace(0.05, 10.0, 41))
def test_gamma_recurrence(z):
    assert gamma_fn(z + 1) == pytest.approx(z * gamma_fn(z), rel=1e-13)


@pytest.mark.parametrize("z", [0.0, -1.0, -0.5])
def test_gamma_rejects_nonpositive(z):
    with pytest.raises(ValueError):
        gamma_fn(z)


@pytest.mark.parametrize(
    "a, x, expected",
    [(1.0, 1.0, 0.6321205588285577), (0.5, 1.0, 1.4936482656248540), (0.5, 0.0, 0.0)],
)
def test_lower_gamma_known_values(a, x, expected):
    assert lower_incomplete_gamma(a, x) == pytest.approx(expected, rel=1e-12, abs=0.0)


def test_lower_gamma_half_matches_erf():
    for x in np.geomspace(1e-8, 60, 200):
        ref = math.sqrt(math.pi) * math.erf(math.sqrt(x))
        assert lower_incomplete_gamma(0.5, x) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("a", [0.05, 0.1, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0])
def test_incomplete_gamma_against_scipy(a):
    xs = np.concatenate([np.geomspace(1e-6, 80, 150), [a + 1.0, a + 1.0 - 1e-12, a + 1.0 + 1e-12]])
    for x in xs:
        lower = lower_incomplete_gamma(a, x)
        upper = upper_incomplete_gamma(a, x)
        assert lower == pytest.approx(special.gammainc(a, x) * special.gamma(a), rel=1e-12)
        assert upper == pytest.approx(special.gammaincc(a, x) * special.gamma(a), rel=1e-12)


@pytest.mark.parametrize("a", np.round(np.arange(0.1, 1.0, 0.1), 1))
def test_lower_gamma_monotone_and_bounded(a):
    vals = np.array([lower_incomplete_gamma(a, x) for x in np.geomspace(1e-6, 50, 400)])
    assert np.all(np.diff(vals) >= 0.0)
    assert np.all(vals <= gamma_fn(a) * (1 + 1e-15))


def test_lower_gamma_limit():
    for a in (0.25, 0.5, 2.0):
        assert lower_incomplete_gamma(a, 1e4) == pytest.approx(gamma_fn(a), rel=1e-14)


@pytest.mark.parametrize("a, x", [(0.0, 1.0), (-0.5, 1.0), (0.5, -1.0)])
def test_incomplete_gamma_domain_errors(a, x):
    with pytest.raises(ValueError):
        lower_incomplete_gamma(a, x)


@pytest.mark.parametrize(
    "params, t0, t1, expected",
    [
        (KernelParams(0.0, 1.0), 0.0, 1.0, 0.6321205588285577),
        (KernelParams(0.5, 0.0), 0.0, 0.1, 0.6324555320336759),
        (KernelParams(0.5, 1.0), 0.0, math.inf, 1.7724538509055160),
    ],
)
def test_kernel_primitive_known_values(params, t0, t1, expected):
    assert kernel_primitive(params, t0, t1) == pytest.approx(expected, rel=1e-13)


def test_kernel_primitive_small_delta_approaches_power_law():
    near = kernel_primitive(KernelParams(0.5, 1e-9), 0.0, 0.1)
    assert near == pytest.approx(2 * math.sqrt(0.1), rel=1e-8)


def test_kernel_primitive_matches_quadrature():
    kp = KernelParams(0.75, 2.0)
    for t0, t1 in [(0.0, 0.3), (0.3, 1.7), (2.0, 9.0), (10.0, 30.0)]:
        ref, _ = integrate.quad(lambda s: s**-kp.beta * math.exp(-kp.delta * s), t0, t1, limit=200)
        assert kernel_primitive(kp, t0, t1) == pytest.approx(ref, rel=1e-10)


def test_kernel_primitive_rejects_reversed_interval():
    with pytest.raises(ValueError):
        kernel_primitive(KernelParams(0.5, 1.0), 2.0, 1.0)


@settings(max_examples=200, deadline=None)
@given(
    beta=st.sampled_from([0.0, 0.25, 0.5, 0.75, 0.9]),
    delta=st.sampled_from([0.5, 1.0, 4.0]),
    ts=st.lists(st.floats(0.0, 20.0, allow_nan=False), min_size=3, max_size=3, unique=True),
)
def test_kernel_primitive_additive(beta, delta, ts):
    t0, t1, t2 = sorted(ts)
    kp = KernelParams(beta, delta)
    whole = kernel_primitive(kp, t0, t2)
    parts = kernel_primitive(kp, t0, t1) + kernel_primitive(kp, t1, t2)
    assert abs(whole - parts) <= 1e-13 * whole + 1e-300


@pytest.mark.parametrize("beta", [0.0, 0.25, 0.5, 0.75, 0.9])
@pytest.mark.parametrize("delta", [0.5, 1.0, 4.0])
def test_total_mass_identity(beta, delta):
    kp = KernelParams(beta, delta)
    assert kernel_primitive(kp, 0.0, math.inf) * delta ** (1 - beta) == pytest.approx(gamma_fn(1 - beta), rel=1e-12)


def test_kernel_tail_values():
    assert kernel_tail(KernelParams(0.0, 1.0, 1.0), 2.0) == pytest.approx(math.exp(-2.0), rel=1e-14)
    kp = KernelParams(0.3, 2.0, 0.7)
    assert kernel_tail(kp, 0.0) == pytest.approx(0.7 * gamma_fn(0.7) / 2.0**0.7, rel=1e-14)


def test_kernel_tail_against_quadrature_and_bound():
    kp = KernelParams(0.5, 4.0, 1.0)
    ref, _ = integrate.quad(lambda s: s**-0.5 * math.exp(-4.0 * s), 1.0, math.inf)
    val = kernel_tail(kp, 1.0)
    assert val == pytest.approx(ref, rel=1e-10)
    c1 = 2**0.5 * gamma_fn(0.5) / 4.0**0.5
    assert val <= c1 * math.exp(-2.0)


@pytest.mark.parametrize("beta, delta, rho", [(0.0, 1.0, 1.0), (0.5, 1.0, 0.5), (0.9, 0.5, 2.0), (0.25, 4.0, 1.0)])
def test_kernel_tail_decreasing_and_bounded(beta, delta, rho):
    kp = KernelParams(beta, delta, rho)
    ts = np.linspace(0.0, 40.0 / delta, 200)
    vals = np.array([kernel_tail(kp, t) for t in ts])
    nonzero = vals[vals > 0]
    assert np.all(np.diff(nonzero) < 0)
    c1 = rho * 2 ** (1 - beta) * gamma_fn(1 - beta) / delta ** (1 - beta)
    assert np.all(vals <= c1 * np.exp(-delta * ts / 2))
