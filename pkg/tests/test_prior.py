import numpy as np
import pytest
from numpy.testing import assert_allclose

from dsfm.prior import (DssParams, indicator_expectation,
                        initial_indicator_expectation, mixing_weight,
                        slab_ar_mean, slab_density, spike_density,
                        stationary_slab_density)
from helpers import laplace_pdf, normal_pdf

PAPER = DssParams(theta=0.9, lambda0=0.9, lambda1=0.396, phi0=0.0, phi1=0.98)


class TestDensities:
    def test_spike_at_zero(self):
        assert_allclose(spike_density(0.0, 0.9), 0.45, rtol=1e-14)

    def test_spike_direct_value(self):
        assert_allclose(spike_density(1.0, 2.0), np.exp(-2.0), rtol=1e-12)
        assert_allclose(spike_density(1.0, 2.0), laplace_pdf(1.0, 2.0), rtol=1e-12)

    def test_spike_symmetry(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=20) * 5
        assert_allclose(spike_density(-x, 0.9), spike_density(x, 0.9), rtol=1e-14)

    def test_slab_at_mean(self):
        # direct evaluation: 1 / sqrt(2 pi * 0.396) = 0.633962
        assert_allclose(slab_density(0.3, 0.3, 0.396),
                        1.0 / np.sqrt(2 * np.pi * 0.396), rtol=1e-12)
        assert_allclose(float(slab_density(0.3, 0.3, 0.396)), 0.633961, atol=1e-6)

    def test_slab_symmetric_about_mean(self):
        m, v = 0.7, 0.5
        assert_allclose(slab_density(m + 0.4, m, v), slab_density(m - 0.4, m, v),
                        rtol=1e-14)

    def test_slab_matches_scipy(self):
        assert_allclose(slab_density(1.2, 0.5, 0.396),
                        normal_pdf(1.2, 0.5, 0.396), rtol=1e-12)

    def test_ar_mean(self):
        assert_allclose(slab_ar_mean(0.5, PAPER), 0.49, rtol=1e-14)
        p2 = DssParams(theta=0.9, lambda0=0.9, lambda1=0.396, phi0=1.0, phi1=0.5)
        assert_allclose(slab_ar_mean(2.0, p2), 1.0 + 0.5 * (2.0 - 1.0), rtol=1e-14)

    def test_stationary_variance_value(self):
        assert_allclose(PAPER.stationary_variance, 10.0, rtol=1e-12)

    def test_stationary_density_at_mean(self):
        assert_allclose(float(stationary_slab_density(0.0, PAPER)),
                        1.0 / np.sqrt(2 * np.pi * 10.0), rtol=1e-12)
        assert_allclose(float(stationary_slab_density(0.0, PAPER)), 0.126157,
                        atol=1e-6)

    def test_stationary_reduces_when_phi1_zero(self):
        p = DssParams(theta=0.9, lambda0=0.9, lambda1=0.396, phi0=0.2, phi1=0.0)
        x = np.linspace(-3, 3, 11)
        assert_allclose(stationary_slab_density(x, p),
                        slab_density(x, 0.2, 0.396), rtol=1e-14)


class TestMixingWeight:
    def test_degenerate_theta(self):
        p0 = DssParams(theta=0.0, lambda0=0.9, lambda1=0.396, phi0=0.0, phi1=0.98)
        p1 = DssParams(theta=1.0, lambda0=0.9, lambda1=0.396, phi0=0.0, phi1=0.98)
        for beta in (-3.0, 0.0, 2.5):
            assert mixing_weight(beta, p0) == 0.0
            assert mixing_weight(beta, p1) == 1.0

    def test_paper_value_at_zero(self):
        expect = 0.9 * 0.126157 / (0.9 * 0.126157 + 0.1 * 0.45)
        assert_allclose(float(mixing_weight(0.0, PAPER)), expect, atol=1e-5)
        assert_allclose(float(mixing_weight(0.0, PAPER)), 0.71617, atol=1e-5)

    def test_sign_symmetry_when_centered(self):
        x = np.array([0.3, 1.1, 4.0])
        assert_allclose(mixing_weight(x, PAPER), mixing_weight(-x, PAPER),
                        rtol=1e-14)

    def test_monotone_in_magnitude_where_slab_heavier(self):
        assert mixing_weight(3.0, PAPER) > mixing_weight(0.0, PAPER)

    def test_large_beta_finite_and_spike_dominated(self):
        # At |beta| = 500 the spike density underflows in linear space but the
        # Gaussian slab decays far faster, so the log-space ratio is a
        # well-defined 0 (the naive underflowed ratio would report 1).
        w = float(mixing_weight(500.0, PAPER))
        assert np.isfinite(w)
        assert 0.0 <= w <= 1e-12

    def test_huge_sweep_in_unit_interval(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(-1e6, 1e6, size=10000)
        w = mixing_weight(x, PAPER)
        assert np.all(np.isfinite(w))
        assert np.all((w >= 0) & (w <= 1))


class TestIndicatorExpectation:
    def test_theta_one_forces_one(self):
        p1 = DssParams(theta=1.0, lambda0=0.9, lambda1=0.396, phi0=0.0, phi1=0.98)
        for bt in (-5.0, 0.0, 0.3):
            assert indicator_expectation(bt, 1.0, p1) == 1.0

    def test_balanced_point_is_half(self):
        # Equal component densities and theta = 0.5 must give exactly 1/2.
        # With phi1 = 0 and lambda1 chosen so the slab at 0 equals the spike
        # at 0, beta_t = 0 is such a point when the weight is forced to 1/2.
        lam0 = 0.9
        lam1 = 1.0 / (2 * np.pi * (lam0 / 2) ** 2)  # slab(0) == lam0/2
        p = DssParams(theta=0.5, lambda0=lam0, lambda1=lam1, phi0=0.0, phi1=0.0)
        # stationary slab == conditional slab here; mixing weight at 0 is then
        # 0.5 because both densities coincide at the origin
        assert_allclose(float(mixing_weight(0.0, p)), 0.5, rtol=1e-12)
        assert_allclose(float(indicator_expectation(0.0, 0.0, p)), 0.5, rtol=1e-12)

    def test_two_line_bayes_oracle(self):
        beta_prev, beta_t = 2.0, 2.0
        th = 0.9 * normal_pdf(beta_prev, 0.0, 10.0) / (
            0.9 * normal_pdf(beta_prev, 0.0, 10.0)
            + 0.1 * laplace_pdf(beta_prev, 0.9))
        num = th * normal_pdf(beta_t, 0.98 * beta_prev, 0.396)
        den = num + (1 - th) * laplace_pdf(beta_t, 0.9)
        assert_allclose(float(indicator_expectation(beta_t, beta_prev, PAPER)),
                        num / den, rtol=1e-12)

    def test_probability_range_wide_sweep(self):
        rng = np.random.default_rng(2)
        bt = rng.uniform(-1e6, 1e6, size=5000)
        bp = rng.uniform(-1e6, 1e6, size=5000)
        g = indicator_expectation(bt, bp, PAPER)
        assert np.all(np.isfinite(g))
        assert np.all((g >= 0) & (g <= 1))


class TestInitialIndicator:
    def test_equals_mixing_weight_when_centered(self):
        x = np.array([-2.0, 0.0, 0.7, 5.0])
        assert_allclose(initial_indicator_expectation(x, PAPER),
                        mixing_weight(x, PAPER), rtol=1e-14)

    def test_theta_one(self):
        p1 = DssParams(theta=1.0, lambda0=0.9, lambda1=0.396, phi0=0.0, phi1=0.98)
        assert initial_indicator_expectation(123.0, p1) == 1.0

    def test_paper_value_at_zero(self):
        assert_allclose(float(initial_indicator_expectation(0.0, PAPER)),
                        0.71617, atol=1e-5)


def test_invalid_params_rejected():
    with pytest.raises(ValueError):
        DssParams(theta=0.9, lambda0=0.0, lambda1=0.396, phi0=0.0, phi1=0.98)
    with pytest.raises(ValueError):
        DssParams(theta=0.9, lambda0=0.9, lambda1=0.396, phi0=0.0, phi1=1.0)
