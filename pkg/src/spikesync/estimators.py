"""Scikit-learn style estimators wrapping the synchrony fits.

Each estimator stores sampler settings as constructor parameters (so
``get_params`` / ``set_params`` / ``clone`` work as usual) and exposes the
posterior summaries as fitted attributes with trailing underscores. Inputs
may be an :class:`~spikesync.data.Ensemble`, an (n_neurons, trials, bins)
array, or a sequence of (trials, bins) binary matrices.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .copula import fit_multi
from .data import as_ensemble
from .pairwise import fit_pair
from .samplers import SamplerConfig, fit_single


class _SamplerParamsMixin:
    def _config(self) -> SamplerConfig:
        return SamplerConfig(
            n_iter=self.n_iter,
            burn_in=self.burn_in,
            thin=self.thin,
            seed=self.seed,
            ess_steps=self.ess_steps,
            slice_width=self.slice_width,
            hmc_step_size=self.hmc_step_size,
            hmc_leapfrog_steps=self.hmc_leapfrog_steps,
            max_lag=self.max_lag,
            hyper_prior_sd=self.hyper_prior_sd,
        )

    def _check_fitted(self):
        if not hasattr(self, "result_"):
            raise NotFittedError(f"{type(self).__name__} has not been fitted yet")


class LatentRateEstimator(_SamplerParamsMixin, BaseEstimator):
    """Posterior firing-rate curve of a single neuron.

    Parameters
    ----------
    n_iter, burn_in, thin : int
        Total Gibbs sweeps, sweeps discarded, and thinning interval.
    seed : int
        MCMC seed; fits are deterministic given the seed.

    Attributes
    ----------
    rate_mean_ : ndarray of shape (n_bins,)
        Posterior-mean firing probability per bin.
    rate_lower_, rate_upper_ : ndarray of shape (n_bins,)
        Equal-tailed 95% posterior band.
    """

    def __init__(self, n_iter=3000, burn_in=1000, thin=1, seed=0, ess_steps=1,
                 slice_width=1.0, hmc_step_size=0.05, hmc_leapfrog_steps=10,
                 max_lag=10, hyper_prior_sd=3.0):
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.thin = thin
        self.seed = seed
        self.ess_steps = ess_steps
        self.slice_width = slice_width
        self.hmc_step_size = hmc_step_size
        self.hmc_leapfrog_steps = hmc_leapfrog_steps
        self.max_lag = max_lag
        self.hyper_prior_sd = hyper_prior_sd

    def fit(self, X, y=None):
        ens = as_ensemble(X, n_neurons=1)
        self.result_ = fit_single(ens[0], self._config())
        self.t_grid_ = self.result_.t_grid
        self.rate_mean_ = self.result_.rate_mean
        self.rate_lower_ = self.result_.rate_lower
        self.rate_upper_ = self.result_.rate_upper
        return self

    def predict_rate(self) -> np.ndarray:
        """Posterior-mean firing probability per bin."""
        self._check_fitted()
        return self.rate_mean_


class PairSynchronyEstimator(_SamplerParamsMixin, BaseEstimator):
    """Excess co-firing (zeta) and lag posterior for a pair of neurons.

    Attributes
    ----------
    zeta_median_ : float
    zeta_interval_ : (float, float)
        Equal-tailed 95% posterior interval for zeta.
    lag_posterior_ : dict mapping lag -> posterior mass
    significant_ : bool
        True iff the 95% interval excludes 1.
    """

    def __init__(self, n_iter=3000, burn_in=1000, thin=1, seed=0, ess_steps=1,
                 slice_width=1.0, hmc_step_size=0.05, hmc_leapfrog_steps=10,
                 max_lag=10, hyper_prior_sd=3.0):
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.thin = thin
        self.seed = seed
        self.ess_steps = ess_steps
        self.slice_width = slice_width
        self.hmc_step_size = hmc_step_size
        self.hmc_leapfrog_steps = hmc_leapfrog_steps
        self.max_lag = max_lag
        self.hyper_prior_sd = hyper_prior_sd

    def fit(self, X, y=None):
        ens = as_ensemble(X, n_neurons=2)
        self.result_ = fit_pair(ens[0], ens[1], self._config())
        self.zeta_draws_ = self.result_.zeta_draws
        self.zeta_median_ = self.result_.zeta_median
        self.zeta_interval_ = self.result_.zeta_interval
        self.lag_posterior_ = self.result_.lag_posterior
        self.significant_ = self.result_.significant
        self.rate_curves_ = np.stack([self.result_.rate_a, self.result_.rate_b])
        return self

    def predict(self, X=None):
        """1 if the pair is synchronous (interval excludes 1), else 0."""
        self._check_fitted()
        return int(self.significant_)


class CopulaSynchronyEstimator(_SamplerParamsMixin, BaseEstimator):
    """Pairwise copula coefficients for an ensemble of n >= 2 neurons.

    Attributes
    ----------
    beta_median_ : ndarray of shape (n_pairs,)
    beta_intervals_ : ndarray of shape (n_pairs, 2)
    significant_ : bool ndarray of shape (n_pairs,)
        True where the 95% interval excludes 0.
    pairs_ : list of (i, j) index pairs in row-major upper-triangle order.
    """

    def __init__(self, n_iter=3000, burn_in=1000, thin=1, seed=0, ess_steps=1,
                 slice_width=1.0, hmc_step_size=0.05, hmc_leapfrog_steps=10,
                 max_lag=10, hyper_prior_sd=3.0):
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.thin = thin
        self.seed = seed
        self.ess_steps = ess_steps
        self.slice_width = slice_width
        self.hmc_step_size = hmc_step_size
        self.hmc_leapfrog_steps = hmc_leapfrog_steps
        self.max_lag = max_lag
        self.hyper_prior_sd = hyper_prior_sd

    def fit(self, X, y=None):
        ens = as_ensemble(X)
        self.result_ = fit_multi(ens, self._config())
        self.pairs_ = self.result_.pairs
        self.beta_draws_ = self.result_.beta_draws
        self.beta_median_ = self.result_.beta_median
        self.beta_intervals_ = self.result_.beta_intervals
        self.significant_ = self.result_.significant
        self.acceptance_rate_ = self.result_.chain.acceptance_rate
        return self

    def predict(self, X=None):
        """Significance flags per pair, upper-triangle order."""
        self._check_fitted()
        return self.significant_.astype(int)
