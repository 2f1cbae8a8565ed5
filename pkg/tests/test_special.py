import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cgtex.special import (
    digamma,
    dlog_bessel_k_dorder,
    gammaln,
    log_bessel_k,
    log_bessel_k_ratio,
    log_gig_integral,
    trigamma,
)
from oracles import quad_log_bessel_k, series_digamma

ORDERS = [0.0, 0.5, 1.0, 5.0, 20.0, 39.0]
ARGS = [1e-3, 0.1, 1.0, 10.0, 100.0]


@pytest.mark.parametrize("nu", ORDERS)
@pytest.mark.parametrize("x", ARGS)
def test_log_bessel_k_matches_quadrature(nu, x):
    ref = quad_log_bessel_k(nu, x)
    assert abs(log_bessel_k(nu, x) - ref) <= 1e-10 * max(1.0, abs(ref))


def test_half_order_closed_form():
    # K_{1/2}(x) = sqrt(pi / (2x)) e^{-x}
    for x in [1e-3, 0.7, 3.0, 250.0]:
        assert log_bessel_k(0.5, x) == pytest.approx(0.5 * math.log(math.pi / (2 * x)) - x, abs=1e-13)


def test_k0_at_one():
    assert log_bessel_k(0.0, 1.0) == pytest.approx(math.log(0.42102443824070834), rel=1e-14)


@pytest.mark.parametrize("nu,x", [(5000.0, 1.0), (2000.5, 30.0), (80.0, 1e-3), (1e4, 0.5)])
def test_large_order_finite_and_accurate(nu, x):
    ref = float(mpmath.log(mpmath.besselk(nu, x)))
    got = log_bessel_k(nu, x)
    assert np.isfinite(got)
    assert got == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("nu", [0.0, 0.3, 1.0, 4.5, 60.0])
def test_tiny_argument_branch(nu):
    x = 1e-120
    ref = float(mpmath.log(mpmath.besselk(nu, mpmath.mpf(x))))
    assert log_bessel_k(nu, x) == pytest.approx(ref, rel=1e-10)


def test_vectorized_broadcast():
    nu = np.array([[0.0], [3.0]])
    x = np.array([0.1, 1.0, 10.0])
    out = log_bessel_k(nu, x)
    assert out.shape == (2, 3)
    for i in range(2):
        for j in range(3):
            assert out[i, j] == log_bessel_k(float(nu[i, 0]), float(x[j]))


@pytest.mark.parametrize("bad", [0.0, -1.0, np.nan, np.inf])
def test_invalid_argument(bad):
    with pytest.raises(ValueError):
        log_bessel_k(1.0, bad)


def test_order_cap():
    with pytest.raises(ValueError):
        log_bessel_k(1e4 + 1, 1.0)


def test_ratio_zero_shift():
    assert log_bessel_k_ratio(3.0, 2.0, 0) == 0.0


def test_ratio_recurrence():
    # K_{v+1}(x) = K_{v-1}(x) + (2v/x) K_v(x)
    v, x = 2.3, 1.7
    lhs = math.exp(log_bessel_k_ratio(v, x, 1))
    rhs = math.exp(log_bessel_k_ratio(v, x, -1)) + 2 * v / x
    assert lhs == pytest.approx(rhs, rel=1e-13)


@given(st.floats(0.0, 60.0), st.floats(1e-3, 200.0), st.floats(1e-3, 10.0))
def test_monotone_decreasing_in_x(nu, x, dx):
    assert log_bessel_k(nu, x + dx) < log_bessel_k(nu, x)


@given(st.floats(0.0, 80.0), st.floats(1e-3, 200.0))
def test_even_in_order(nu, x):
    assert log_bessel_k(-nu, x) == log_bessel_k(nu, x)


@pytest.mark.parametrize("x", [1e-3, 0.1, 1.0, 10.0, 100.0])
def test_order_derivative_zero_at_origin(x):
    assert abs(dlog_bessel_k_dorder(0.0, x)) <= 1e-8


@pytest.mark.parametrize("nu,x", [(0.5, 1.0), (3.0, 0.2), (-12.0, 5.0), (39.0, 40.0)])
def test_order_derivative_matches_mpmath(nu, x):
    ref = float(mpmath.diff(lambda v: mpmath.log(mpmath.besselk(v, x)), nu))
    assert dlog_bessel_k_dorder(nu, x) == pytest.approx(ref, rel=1e-7, abs=1e-9)


def test_gig_integral_against_quadrature():
    from scipy import integrate

    p, a, b = -2.5, 1.3, 0.7
    val, _ = integrate.quad(lambda z: z ** (p - 1) * math.exp(-a / z - b * z), 0, np.inf, epsrel=1e-12)
    assert log_gig_integral(p, a, b) == pytest.approx(math.log(val), rel=1e-10)


@pytest.mark.parametrize("x", np.geomspace(0.1, 100.0, 25))
def test_digamma_series_oracle(x):
    ref = series_digamma(float(x))
    assert abs(digamma(x) - ref) <= 1e-12 * max(1.0, abs(ref))


def test_digamma_known_value():
    assert digamma(1.0) == pytest.approx(-np.euler_gamma, abs=1e-15)


def test_trigamma_known_value():
    assert trigamma(1.0) == pytest.approx(math.pi ** 2 / 6, rel=1e-14)


@given(st.floats(0.05, 500.0))
def test_trigamma_is_digamma_derivative(x):
    h = 1e-5 * x
    fd = (digamma(x + h) - digamma(x - h)) / (2 * h)
    assert trigamma(x) == pytest.approx(fd, rel=1e-6)


@pytest.mark.parametrize("f", [digamma, trigamma, gammaln])
def test_gamma_family_domain(f):
    with pytest.raises(ValueError):
        f(0.0)
    with pytest.raises(ValueError):
        f(-1.5)
