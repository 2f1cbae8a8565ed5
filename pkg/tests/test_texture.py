import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from cgtex.evaluation import mardia_kurtosis
from cgtex.texture import (
    Exponential,
    Gamma,
    InverseGamma,
    sample_texture,
    simulate_cg,
    texture_log_pdf,
    texture_mean,
)


def test_exponential_values():
    assert texture_log_pdf(Exponential(1.0), 1.0) == pytest.approx(-1.0)
    assert texture_log_pdf(Exponential(1.0), 1e-300) == pytest.approx(0.0, abs=1e-12)


@given(st.floats(0.05, 20.0), st.floats(1e-3, 50.0))
def test_gamma_shape_one_is_exponential(lam, z):
    assert texture_log_pdf(Gamma(1.0, 1.0 / lam), z) == pytest.approx(texture_log_pdf(Exponential(lam), z), rel=1e-12, abs=1e-12)


def test_inverse_gamma_value():
    # scipy's invgamma uses the same shape/scale convention
    assert texture_log_pdf(InverseGamma(2.0, 3.0), 1.5) == pytest.approx(stats.invgamma(2.0, scale=3.0).logpdf(1.5), rel=1e-13)


@pytest.mark.parametrize("params", [Exponential(2.5), Gamma(0.7, 1.3), Gamma(4.0, 2.0), InverseGamma(2.0, 3.0), InverseGamma(0.8, 0.5)])
def test_prior_integrates_to_one(params):
    val, _ = integrate.quad(lambda s: math.exp(texture_log_pdf(params, math.exp(s)) + s), -60, 60, limit=400, epsabs=1e-13)
    assert abs(val - 1.0) <= 1e-8


def test_log_pdf_rejects_nonpositive():
    with pytest.raises(ValueError):
        texture_log_pdf(Exponential(1.0), 0.0)


def test_means():
    assert texture_mean(Exponential(2.5)) == 2.5
    assert texture_mean(Gamma(4.0, 2.0)) == 2.0
    assert texture_mean(InverseGamma(4.0, 6.0)) == 2.0
    with pytest.raises(ValueError):
        texture_mean(InverseGamma(1.0, 1.0))


@pytest.mark.parametrize("bad", [0.0, -1.0, np.nan, np.inf])
def test_params_positive(bad):
    with pytest.raises(ValueError):
        Exponential(bad)
    with pytest.raises(ValueError):
        Gamma(1.0, bad)
    with pytest.raises(ValueError):
        InverseGamma(bad, 1.0)


def test_sample_empty():
    assert sample_texture(Exponential(1.0), 0, seed=1).size == 0


def test_exponential_sample_mean():
    z = sample_texture(Exponential(2.0), 10**6, seed=11)
    assert 1.994 <= z.mean() <= 2.006


@pytest.mark.parametrize("params", [Gamma(3.0, 1.5), InverseGamma(4.0, 6.0)])
def test_sample_mean_within_three_se(params):
    z = sample_texture(params, 10**6, seed=12)
    assert abs(z.mean() - texture_mean(params)) <= 3 * z.std() / math.sqrt(z.size)


def test_inverse_gamma_reciprocal_law():
    a, b = 4.0, 6.0
    z = sample_texture(InverseGamma(a, b), 20000, seed=3)
    res = stats.kstest(1.0 / z, stats.gamma(a, scale=1.0 / b).cdf)
    assert res.statistic < 1.36 / math.sqrt(z.size)


def test_sampling_deterministic():
    a = sample_texture(Gamma(2.0, 1.0), 50, seed=4)
    b = sample_texture(Gamma(2.0, 1.0), 50, seed=4)
    np.testing.assert_array_equal(a, b)


def test_simulate_deterministic(sigma2d):
    a = simulate_cg(Exponential(2.0), [0, 0], sigma2d, 20, 10, seed=7)
    b = simulate_cg(Exponential(2.0), [0, 0], sigma2d, 20, 10, seed=7)
    np.testing.assert_array_equal(a.segments, b.segments)


def test_simulate_fixed_texture_is_gaussian():
    sig = simulate_cg(None, [0, 0], np.eye(2), 25000, 40, seed=8, fixed_texture=1.0)
    y = sig.flat()
    assert abs(mardia_kurtosis(y) - 8.0) <= 0.2
    np.testing.assert_allclose(np.cov(y.T), np.eye(2), atol=0.01)


def test_pooled_covariance_is_mean_texture_times_sigma():
    sig = simulate_cg(Exponential(2.0), [0, 0], np.eye(2), 5000, 40, seed=9)
    np.testing.assert_allclose(np.cov(sig.flat().T), 2.0 * np.eye(2), atol=0.1)


def test_segments_share_texture():
    fixed = simulate_cg(None, [0], [[1.0]], 2000, 40, seed=10, fixed_texture=2.0)
    mixed = simulate_cg(Exponential(2.0), [0], [[1.0]], 2000, 40, seed=10)
    assert mixed.segments.var(axis=1).var() > 5 * fixed.segments.var(axis=1).var()


def test_simulate_rejects_bad_sigma():
    with pytest.raises(ValueError):
        simulate_cg(Exponential(1.0), [0, 0], [[1.0, 2.0], [2.0, 1.0]], 3, 3, seed=0)
