import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal, norm

from spikesync import (
    GPHyperParams,
    NumericalError,
    SpikeTrainSet,
    ValidationError,
    bernoulli_loglik,
    bernoulli_loglik_grad,
    build_covariance,
    gp_logpdf,
    hyperprior_logdensity,
    logistic_rate,
    sample_gp_prior,
)
from spikesync.gp import logit


def hyper(lam=1.0, eta=1.0, rho=1.0, sig=1.0):
    return GPHyperParams(math.log(lam), math.log(eta), math.log(rho), math.log(sig))


class TestCovariance:
    def test_diagonal_value(self):
        h = hyper(1.5, 0.7, 2.0, 0.3)
        cov = build_covariance([0.2, 0.8], h)
        expected = 1.5**2 + 0.7**2 + 0.3**2
        assert cov.C[0, 0] == pytest.approx(expected, rel=1e-14)

    def test_long_range_tail_is_lambda_squared(self):
        h = hyper(1.2, 2.0, 3.0, 0.1)
        cov = build_covariance([0.0, 100.0], h)
        assert cov.C[0, 1] == pytest.approx(1.2**2, rel=1e-12)

    def test_off_diagonal_formula(self):
        # lam=1, eta=2, rho=3, dt=0.5 -> 1 + 4 exp(-2.25)
        h = hyper(1.0, 2.0, 3.0, 1e-8)
        cov = build_covariance([0.0, 0.5], h)
        assert cov.C[0, 1] == pytest.approx(1.0 + 4.0 * math.exp(-2.25), rel=1e-12)

    def test_exactly_symmetric(self):
        h = hyper(0.9, 1.1, 4.0, 0.2)
        cov = build_covariance(np.linspace(0, 1, 37), h)
        assert np.array_equal(cov.C, cov.C.T)

    def test_cholesky_reconstructs(self):
        h = hyper(0.5, 1.5, 2.5, 0.4)
        cov = build_covariance(np.linspace(0, 1, 50), h)
        err = np.linalg.norm(cov.chol @ cov.chol.T - cov.C)
        assert err <= 1e-8 * np.linalg.norm(cov.C)

    def test_jitter_escalation_rescues_near_singular(self):
        # ten duplicate time points + negligible noise make C rank-1
        h = GPHyperParams(0.0, 0.0, 0.0, -40.0)
        cov = build_covariance(np.zeros(10), h)
        assert cov.jitter_used > 0.0
        assert np.all(np.isfinite(cov.chol))

    def test_empty_grid(self):
        with pytest.raises(ValidationError):
            build_covariance([], hyper())


class TestLogistic:
    def test_zero_maps_to_half(self):
        assert logistic_rate(0.0) == pytest.approx(0.5)

    def test_log3_maps_to_three_quarters(self):
        assert logistic_rate(math.log(3.0)) == pytest.approx(0.75, rel=1e-12)

    def test_extremes_clamped(self):
        assert logistic_rate(40.0) == 1.0 - 1e-12
        assert logistic_rate(-40.0) == 1e-12

    def test_monotone(self):
        u = np.linspace(-5, 5, 101)
        assert np.all(np.diff(logistic_rate(u)) > 0)

    def test_logit_round_trip(self):
        p = np.array([1e-6, 0.01, 0.4, 0.9, 1 - 1e-6])
        assert np.allclose(logistic_rate(logit(p)), p, atol=1e-9)


class TestBernoulliLoglik:
    def test_flat_latent_single_trial(self):
        data = SpikeTrainSet("a", [[1, 0]], 0.01)
        assert bernoulli_loglik(np.zeros(2), data) == pytest.approx(2 * math.log(0.5))

    def test_empty_trials_give_zero(self):
        data = SpikeTrainSet("a", np.zeros((0, 3), dtype=int), 0.01)
        assert bernoulli_loglik(np.ones(3), data) == 0.0

    def test_matches_bruteforce_summation(self):
        rng = np.random.default_rng(12)
        data = SpikeTrainSet("a", (rng.random((5, 8)) < 0.5).astype(int), 0.01)
        u = rng.normal(size=8)
        p = 1.0 / (1.0 + np.exp(-u))
        expected = 0.0
        for r in range(5):
            for t in range(8):
                y = data.trials[r, t]
                expected += y * math.log(p[t]) + (1 - y) * math.log(1 - p[t])
        assert bernoulli_loglik(u, data) == pytest.approx(expected, rel=1e-12)

    def test_shape_mismatch(self):
        data = SpikeTrainSet("a", [[1, 0]], 0.01)
        with pytest.raises(ValidationError):
            bernoulli_loglik(np.zeros(3), data)

    def test_decreases_when_spike_bin_latent_drops(self):
        data = SpikeTrainSet("a", [[1, 1, 0]], 0.01)
        u = np.array([0.3, -0.1, 0.2])
        base = bernoulli_loglik(u, data)
        u2 = u.copy()
        u2[0] -= 0.5
        assert bernoulli_loglik(u2, data) < base

    @pytest.mark.parametrize("seed", range(4))
    def test_gradient_formula_and_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        data = SpikeTrainSet("a", (rng.random((6, 9)) < 0.4).astype(int), 0.01)
        u = rng.normal(scale=1.5, size=9)
        g = bernoulli_loglik_grad(u, data)
        counts = data.trials.sum(axis=0)
        assert np.allclose(g, counts - 6 * logistic_rate(u), rtol=1e-12)
        h = 1e-5
        for t in [0, 4, 8]:
            up, dn = u.copy(), u.copy()
            up[t] += h
            dn[t] -= h
            fd = (bernoulli_loglik(up, data) - bernoulli_loglik(dn, data)) / (2 * h)
            assert fd == pytest.approx(g[t], rel=1e-6)


class _ZeroRng:
    def standard_normal(self, n):
        return np.zeros(n)


class TestPriorSampling:
    def test_zero_noise_gives_zero_path(self):
        cov = build_covariance(np.linspace(0, 1, 5), hyper())
        assert np.array_equal(sample_gp_prior(cov, _ZeroRng()), np.zeros(5))

    def test_sample_covariance_matches(self):
        h = hyper(0.8, 1.2, 2.0, 0.3)
        cov = build_covariance([0.1, 0.5, 0.9], h)
        rng = np.random.default_rng(42)
        draws = np.stack([sample_gp_prior(cov, rng) for _ in range(20000)])
        est = np.cov(draws.T, bias=True)
        assert np.all(np.abs(est - cov.C) <= 0.05 * np.abs(cov.C).max())

    def test_seed_reproducibility(self):
        cov = build_covariance([0.1, 0.9], hyper())
        a = sample_gp_prior(cov, np.random.default_rng(5))
        b = sample_gp_prior(cov, np.random.default_rng(5))
        assert np.array_equal(a, b)


class TestGpLogpdf:
    def test_matches_scipy(self):
        h = hyper(0.6, 1.1, 3.0, 0.5)
        t = np.linspace(0, 1, 12)
        cov = build_covariance(t, h)
        rng = np.random.default_rng(2)
        u = rng.normal(size=12)
        expected = multivariate_normal(mean=np.zeros(12), cov=cov.C).logpdf(u)
        assert gp_logpdf(u, cov) == pytest.approx(expected, rel=1e-9)


class TestHyperprior:
    def test_at_origin_matches_scipy(self):
        val = hyperprior_logdensity(GPHyperParams())
        assert val == pytest.approx(4 * norm.logpdf(0.0, 0.0, 3.0), rel=1e-12)

    def test_one_sd_shift_drops_half(self):
        base = hyperprior_logdensity(GPHyperParams())
        shifted = hyperprior_logdensity(GPHyperParams(log_lambda=3.0))
        assert base - shifted == pytest.approx(0.5, rel=1e-12)

    def test_sign_symmetric(self):
        a = hyperprior_logdensity(GPHyperParams(log_eta=1.7))
        b = hyperprior_logdensity(GPHyperParams(log_eta=-1.7))
        assert a == pytest.approx(b, rel=1e-14)

    def test_custom_sd(self):
        val = hyperprior_logdensity(GPHyperParams(), sd=1.0)
        assert val == pytest.approx(4 * norm.logpdf(0.0, 0.0, 1.0), rel=1e-12)

    def test_non_finite_rejected(self):
        with pytest.raises(ValidationError):
            GPHyperParams(log_lambda=float("inf"))
