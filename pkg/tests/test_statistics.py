"""Anderson-Darling, moment and ML estimators, KS distance."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from bayesgof.distributions import GammaParams, GpdParams, gamma_sample, gpd_sample
from bayesgof.statistics import (FailReason, FitError, ad_batch_gamma,
                                 ad_batch_gpd, ad_statistic, anderson_darling,
                                 gpd_loglik, ks_distance, ml_gpd, ml_gpd_batch,
                                 mom_gamma, mom_gamma_batch)
from oracles import ad_brute_force


def identity(x):
    return np.asarray(x, dtype=float)


class TestAndersonDarling:
    def test_single_point(self):
        assert anderson_darling([0.5], identity) == pytest.approx(2 * math.log(2) - 1, abs=1e-12)

    def test_two_points(self):
        expected = -2 - (math.log(1 / 3) + 3 * math.log(2 / 3))
        assert anderson_darling([2 / 3, 1 / 3], identity) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.3151, abs=1e-4)

    def test_point_beyond_gpd_endpoint_is_infinite(self):
        p = GpdParams(-0.1, 1.0)
        assert ad_statistic([0.5, 2.0, 11.0], p) == math.inf
        assert ad_statistic([0.5, 2.0, 10.0], p) == math.inf

    def test_nonpositive_point_is_infinite_for_gamma(self):
        assert ad_statistic([0.5, -0.1], GammaParams(2, 1)) == math.inf

    def test_explicit_support(self):
        assert anderson_darling([0.2, 1.5], identity, support=(0.0, 1.0)) == math.inf
        assert math.isfinite(anderson_darling([0.2, 0.5], identity, support=(0.0, 1.0)))

    def test_empty_sample_rejected(self):
        with pytest.raises(ValueError):
            anderson_darling([], identity)

    @given(arrays(float, st.integers(1, 40), elements=st.floats(1e-6, 1 - 1e-6)))
    @settings(max_examples=200, deadline=None)
    def test_matches_brute_force(self, u):
        assert anderson_darling(u, identity) == pytest.approx(ad_brute_force(u), abs=1e-10, rel=1e-12)

    @given(arrays(float, st.integers(1, 30), elements=st.floats(1e-4, 1 - 1e-4)),
           st.sampled_from(["exp", "logit", "cube"]))
    @settings(max_examples=150, deadline=None)
    def test_invariant_under_increasing_transform(self, u, kind):
        # sample y = h(u) tested against cdf = h^-1 gives the same statistic
        h, h_inv = {
            "exp": (np.exp, np.log),
            "logit": (lambda v: np.log(v / (1 - v)), lambda y: 1 / (1 + np.exp(-y))),
            "cube": (lambda v: (v - 0.5) ** 3, lambda y: np.cbrt(y) + 0.5),
        }[kind]
        a = anderson_darling(u, identity)
        b = anderson_darling(h(u), h_inv)
        assert b == pytest.approx(a, abs=1e-10, rel=1e-10)

    @given(arrays(float, st.integers(1, 30), elements=st.floats(1e-6, 1 - 1e-6)))
    @settings(max_examples=100, deadline=None)
    def test_order_does_not_matter(self, u):
        assert anderson_darling(u[::-1], identity) == pytest.approx(anderson_darling(u, identity), abs=1e-12)

    def test_uniform_mean_is_one(self):
        rng = np.random.default_rng(7)
        U = rng.random((20000, 24))
        a2 = ad_batch_gamma(-np.log1p(-U), np.ones(20000), np.ones(20000))
        assert abs(a2.mean() - 1.0) < 0.05

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(3)
        X = gpd_sample(GpdParams(0.25, 1.0), 24 * 50, rng).reshape(50, 24)
        g = rng.uniform(-0.3, 0.6, 50)
        s = rng.uniform(0.5, 2.0, 50)
        batch = ad_batch_gpd(X, g, s)
        single = [ad_statistic(X[i], GpdParams(g[i], s[i])) for i in range(50)]
        np.testing.assert_allclose(batch, single, rtol=0, atol=1e-12)

    def test_gamma_against_scipy_cdf(self):
        rng = np.random.default_rng(5)
        x = gamma_sample(GammaParams(4, 8), 12, rng)
        expected = anderson_darling(x, lambda v: stats.gamma.cdf(v, 4, scale=1 / 8))
        assert ad_statistic(x, GammaParams(4, 8)) == pytest.approx(expected, abs=1e-10)

    def test_unsupported_parameter_type(self):
        with pytest.raises(TypeError):
            ad_statistic([1.0], (1.0, 2.0))


class TestMomGamma:
    def test_example(self):
        # mean 4, variance 2
        p = mom_gamma([4 - math.sqrt(2), 4.0, 4 + math.sqrt(2)])
        assert p.alpha == pytest.approx(8.0, abs=1e-12)
        assert p.lam == pytest.approx(2.0, abs=1e-12)

    def test_constant_sample_fails_with_boundary(self):
        with pytest.raises(FitError) as info:
            mom_gamma([3.0, 3.0, 3.0])
        assert info.value.reason is FailReason.BOUNDARY

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            mom_gamma([1.0])
        with pytest.raises(ValueError):
            mom_gamma([1.0, -2.0, 3.0])

    def test_consistency(self):
        x = gamma_sample(GammaParams(4, 8), 10**6, np.random.default_rng(11))
        p = mom_gamma(x)
        assert abs(p.alpha - 4) < 0.05
        assert abs(p.lam - 8) < 0.1

    @given(arrays(float, st.integers(2, 50), elements=st.floats(1e-3, 1e3)))
    @settings(max_examples=150, deadline=None)
    def test_moments_round_trip(self, x):
        if x.var(ddof=1) <= 1e-12 * x.mean() ** 2:
            return
        p = mom_gamma(x)
        assert p.alpha / p.lam == pytest.approx(x.mean(), rel=1e-12)
        assert p.alpha / p.lam**2 == pytest.approx(x.var(ddof=1), rel=1e-10)

    def test_batch_flags_constant_rows(self):
        X = np.array([[1.0, 2.0, 3.0], [2.0, 2.0, 2.0]])
        alpha, lam, ok = mom_gamma_batch(X)
        assert ok.tolist() == [True, False]
        assert np.isnan(alpha[1]) and np.isnan(lam[1])


def _scipy_gpd_fit(x):
    c, _, scale = stats.genpareto.fit(x, floc=0)
    return c, scale


class TestMlGpd:
    def test_consistency(self):
        x = gpd_sample(GpdParams(0.25, 1.0), 10**6, np.random.default_rng(13))
        p = ml_gpd(x)
        assert abs(p.gamma - 0.25) < 0.01
        assert abs(p.sigma - 1.0) < 0.01

    def test_degenerate_sample_fails(self):
        with pytest.raises(FitError):
            ml_gpd([1.0, 1.0, 1.0, 1.0])

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            ml_gpd([2.0])
        with pytest.raises(ValueError):
            ml_gpd([1.0, 0.0, 2.0])

    def test_agrees_with_scipy_fit(self):
        rng = np.random.default_rng(17)
        checked = 0
        for _ in range(60):
            x = gpd_sample(GpdParams(0.25, 1.0), 24, rng)
            try:
                p = ml_gpd(x)
            except FitError:
                continue
            c, scale = _scipy_gpd_fit(x)
            # both are maximisers: ours must be at least as good
            assert gpd_loglik(x, p) >= gpd_loglik(x, GpdParams(c, scale)) - 1e-6
            checked += 1
        assert checked >= 55

    def test_local_optimality(self):
        rng = np.random.default_rng(19)
        for gamma in (0.25, -0.1, 0.6):
            x = gpd_sample(GpdParams(gamma, 1.0), 24, rng)
            p = ml_gpd(x)
            best = gpd_loglik(x, p)
            dg = rng.normal(0, 1e-3, 100)
            dls = rng.normal(0, 1e-3, 100)
            for a, b in zip(dg, dls):
                q = GpdParams(p.gamma + a, p.sigma * math.exp(b))
                assert gpd_loglik(x, q) <= best + 1e-9

    def test_gradient_vanishes_at_optimum(self):
        x = gpd_sample(GpdParams(0.25, 1.0), 200, np.random.default_rng(23))
        p = ml_gpd(x)
        h = 1e-5
        dg = (gpd_loglik(x, GpdParams(p.gamma + h, p.sigma)) - gpd_loglik(x, GpdParams(p.gamma - h, p.sigma))) / (2 * h)
        ds = (gpd_loglik(x, GpdParams(p.gamma, p.sigma + h)) - gpd_loglik(x, GpdParams(p.gamma, p.sigma - h))) / (2 * h)
        assert abs(dg) < 1e-3 and abs(ds) < 1e-3

    def test_exponential_data_fit_near_zero_shape(self):
        x = np.random.default_rng(29).exponential(2.0, 10**5)
        p = ml_gpd(x)
        assert abs(p.gamma) < 0.02
        assert abs(p.sigma - 2.0) < 0.05

    def test_fitted_support_contains_sample(self):
        rng = np.random.default_rng(31)
        X = gpd_sample(GpdParams(-0.3, 1.0), 24 * 400, rng).reshape(400, 24)
        g, s, reason = ml_gpd_batch(X)
        ok = np.array([r is None for r in reason])
        assert np.all(X[ok].max(axis=1) < np.where(g[ok] < 0, -s[ok] / g[ok], np.inf))
        assert np.all(g[ok] > -1)

    def test_failure_rate_is_small(self):
        X = gpd_sample(GpdParams(0.25, 1.0), 24 * 4000, np.random.default_rng(37)).reshape(4000, 24)
        _, _, reason = ml_gpd_batch(X)
        rate = np.mean([r is not None for r in reason])
        assert 0.0 <= rate <= 0.02

    def test_batch_matches_single(self):
        rng = np.random.default_rng(41)
        X = gpd_sample(GpdParams(0.25, 1.0), 24 * 20, rng).reshape(20, 24)
        g, s, reason = ml_gpd_batch(X)
        for i in range(20):
            if reason[i] is None:
                p = ml_gpd(X[i])
                assert (p.gamma, p.sigma) == (g[i], s[i])


class TestKsDistance:
    def test_single_point(self):
        assert ks_distance([0.5]) == 0.5

    def test_even_spread(self):
        assert ks_distance([0.25, 0.5, 0.75]) <= 0.25

    def test_large_uniform_sample(self):
        u = np.random.default_rng(43).random(10**6)
        assert ks_distance(u) <= 0.002

    def test_matches_scipy(self):
        u = np.random.default_rng(47).random(500) ** 1.3
        assert ks_distance(u) == pytest.approx(stats.kstest(u, "uniform").statistic, abs=1e-14)

    def test_errors(self):
        with pytest.raises(ValueError):
            ks_distance([])
        with pytest.raises(ValueError):
            ks_distance([0.2, 1.2])
