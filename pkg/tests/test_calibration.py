import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special, stats

from conftest import R1, RATES
from hidden_reach.calibration import (
    AttackMoments,
    DetectorCalibration,
    QuantileMethod,
    chi2_threshold,
    clamp_epsilon,
    gamma_approx_params,
    gen_chi2_cdf,
    markov_epsilon,
    noise_norm_quantile,
    reg_lower_incomplete_gamma,
)
from hidden_reach.errors import DegeneracyError, ValidationError


class TestIncompleteGamma:
    def test_exponential(self):
        assert reg_lower_incomplete_gamma(1.0, 2.0) == pytest.approx(1 - math.exp(-2.0), abs=1e-14)

    def test_half_shape_is_erf(self):
        for x in (0.01, 0.5, 3.3174, 20.0):
            assert reg_lower_incomplete_gamma(0.5, x) == pytest.approx(math.erf(math.sqrt(x)), abs=1e-13)

    def test_edges(self):
        assert reg_lower_incomplete_gamma(2.0, 0.0) == 0.0
        assert reg_lower_incomplete_gamma(2.0, math.inf) == 1.0

    def test_frozen_reference(self, oracles):
        assert reg_lower_incomplete_gamma(0.5, 3.3174) == pytest.approx(oracles["chi2_half_df_cdf"], abs=1e-12)

    @pytest.mark.parametrize("a,x", [(-1.0, 1.0), (0.0, 1.0), (1.0, -0.1)])
    def test_domain(self, a, x):
        with pytest.raises(ValidationError):
            reg_lower_incomplete_gamma(a, x)

    @given(st.floats(0.05, 200.0), st.floats(0.0, 500.0))
    def test_against_scipy(self, a, x):
        assert reg_lower_incomplete_gamma(a, x) == pytest.approx(special.gammainc(a, x), abs=1e-12)

    @given(st.floats(0.1, 50.0), st.floats(0.0, 100.0), st.floats(0.0, 10.0))
    def test_monotone_in_x(self, a, x, dx):
        assert reg_lower_incomplete_gamma(a, x + dx) >= reg_lower_incomplete_gamma(a, x) - 1e-15


class TestThreshold:
    def test_table_values(self):
        for A, want in zip(RATES, (6.63, 3.84, 2.70, 1.64)):
            assert abs(chi2_threshold(1, A) - want) <= 0.01

    def test_two_dof_closed_form(self):
        assert chi2_threshold(2, 0.05) == pytest.approx(-2 * math.log(0.05), rel=1e-10)

    @given(st.integers(1, 40), st.floats(1e-6, 1 - 1e-6))
    def test_roundtrip(self, m, A):
        alpha = chi2_threshold(m, A)
        assert abs(reg_lower_incomplete_gamma(m / 2, alpha / 2) - (1 - A)) <= 1e-8
        assert alpha == pytest.approx(stats.chi2.isf(A, m), rel=1e-7)

    @given(st.integers(1, 10), st.floats(0.01, 0.5), st.floats(0.001, 0.4))
    def test_decreasing_in_rate(self, m, A, dA):
        assert chi2_threshold(m, min(A + dA, 0.99)) <= chi2_threshold(m, A)

    @pytest.mark.parametrize("m,A", [(0, 0.05), (1.5, 0.05), (1, 0.0), (1, 1.0), (1, -0.2)])
    def test_domain(self, m, A):
        with pytest.raises(ValidationError):
            chi2_threshold(m, A)

    def test_calibration_object(self):
        cal = DetectorCalibration.from_rate(0.05, 1)
        cal.check()
        with pytest.raises(ValidationError):
            DetectorCalibration(0.05, 1, 1.0).check()


class TestGeneralizedChi2:
    def test_single_weight(self):
        for x in (0.1, 1.0, 4.0, 15.0):
            assert gen_chi2_cdf(x, [1.0]) == pytest.approx(stats.chi2.cdf(x, 1), abs=1e-9)

    def test_equal_weights(self):
        for x in (0.5, 2.0, 8.0):
            assert gen_chi2_cdf(x, [0.7, 0.7, 0.7]) == pytest.approx(stats.chi2.cdf(x / 0.7, 3), abs=1e-9)

    def test_two_weights_closed_form(self):
        # w1 chi2_2 + w2 chi2_2 has a hypoexponential law
        w1, w2 = 0.34, 0.56
        weights = [w1, w1, w2, w2]
        for x in (0.5, 3.0, 9.0):
            surv = (w2 * math.exp(-x / (2 * w2)) - w1 * math.exp(-x / (2 * w1))) / (w2 - w1)
            assert gen_chi2_cdf(x, weights) == pytest.approx(1 - surv, abs=1e-9)

    def test_nonpositive_weights(self):
        with pytest.raises(DegeneracyError):
            gen_chi2_cdf(1.0, [0.0, -1.0])


class TestNoiseQuantile:
    def test_gamma_table(self):
        for A, want in zip(RATES, (4.14, 2.69, 2.07, 1.44)):
            assert abs(noise_norm_quantile(R1, 1 - A, "gamma").v_bar - want) <= 0.01

    def test_gamma_params(self):
        assert gamma_approx_params(R1) == pytest.approx((1.0, 0.9))

    def test_exact_against_mc_oracle(self, oracles):
        ref = oracles["noise_quantile_mc"]["quantiles"]
        for key, q in ref.items():
            exact = noise_norm_quantile(R1, float(key)).v_bar
            # 1e7 samples: quantile sampling error well below 0.5%
            assert exact == pytest.approx(q, rel=5e-3)

    def test_exact_cdf_roundtrip(self):
        lam = np.linalg.eigvalsh(R1)
        for p in (0.8, 0.95, 0.99):
            assert gen_chi2_cdf(noise_norm_quantile(R1, p).v_bar, lam) == pytest.approx(p, abs=1e-8)

    def test_isotropic_exact(self):
        for p in (0.5, 0.9):
            got = noise_norm_quantile(2.0 * np.eye(3), p).v_bar
            assert got == pytest.approx(2.0 * stats.chi2.ppf(p, 3), rel=1e-10)

    def test_isotropic_methods_agree(self):
        R = 0.3 * np.eye(2)
        e = noise_norm_quantile(R, 0.95).v_bar
        g = noise_norm_quantile(R, 0.95, QuantileMethod.GAMMA).v_bar
        assert e == pytest.approx(g, rel=1e-10)

    def test_monte_carlo_reproducible(self):
        a = noise_norm_quantile(R1, 0.9, "monte-carlo", n_samples=200_000, seed=3)
        b = noise_norm_quantile(R1, 0.9, "monte-carlo", n_samples=200_000, seed=3)
        assert a.v_bar == b.v_bar
        assert a.v_bar == pytest.approx(noise_norm_quantile(R1, 0.9).v_bar, rel=0.02)

    def test_rank_deficient(self):
        got = noise_norm_quantile(np.diag([1.0, 0.0]), 0.95).v_bar
        assert got == pytest.approx(stats.chi2.ppf(0.95, 1), rel=1e-9)

    def test_zero_covariance(self):
        with pytest.raises(DegeneracyError):
            noise_norm_quantile(np.zeros((2, 2)), 0.9)

    @pytest.mark.parametrize("p", [0.0, 1.0, 1.5])
    def test_bad_probability(self, p):
        with pytest.raises(ValidationError):
            noise_norm_quantile(R1, p)

    @given(st.floats(0.05, 0.9), st.floats(0.01, 0.09))
    def test_monotone_in_p(self, p, dp):
        assert noise_norm_quantile(R1, p + dp, "gamma").v_bar > noise_norm_quantile(R1, p, "gamma").v_bar


class TestMarkov:
    def test_table(self):
        alpha = chi2_threshold(1, 0.05)
        got = [markov_epsilon(AttackMoments.attack_free(1), 0.05, a, alpha) for a in (0.01, 0.03)]
        assert got == pytest.approx([21.16, 46.16], abs=0.01)

    def test_case2_caps_gamma(self):
        got = [noise_norm_quantile(R1, 0.95 + a, "gamma").v_bar for a in (0.01, 0.03)]
        assert got == pytest.approx([2.8970, 3.5208], abs=0.01)

    def test_mean_enters_energy(self):
        mom = AttackMoments(mean=[1.0], second_moment=[[2.0]])
        assert markov_epsilon(mom, 0.1, 0.05, 1.0) == pytest.approx(3.0 / 0.05 - 1.0)

    def test_negative_is_clamped(self):
        eps = markov_epsilon(AttackMoments(mean=[0.0], second_moment=[[0.01]]), 0.5, 0.1, 6.0)
        assert eps < 0
        assert clamp_epsilon(eps) == 0.0
        assert clamp_epsilon(2.5) == 2.5

    @pytest.mark.parametrize("a_p", [0.0, 0.05, 0.07])
    def test_domain(self, a_p):
        with pytest.raises(ValidationError):
            markov_epsilon(AttackMoments.attack_free(1), 0.05, a_p, 3.84)

    def test_inconsistent_moments(self):
        with pytest.raises(ValidationError):
            AttackMoments(mean=[2.0], second_moment=[[1.0]])
