"""Gaussian-process prior over latent log-odds firing rates.

The latent path u(t) has a GP prior with covariance

    C_ij = lam^2 + eta^2 * exp(-rho^2 (t_i - t_j)^2) + [i == j] * sigma_eps^2

and the firing probability is the logistic transform of u. All four
hyperparameters are carried on the natural-log scale and receive
independent N(0, sd^2) priors (sd = 3 by default).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import expit, xlogy

from .data import SpikeTrainSet
from .errors import NumericalError, ValidationError

PROB_CLAMP = 1e-12

# Relative jitter schedule for Cholesky rescue: sigma_eps^2 usually
# regularizes, but small sampled values can leave C near-singular.
_JITTER_START = 1e-10
_JITTER_MAX = 1e-4


@dataclass
class GPHyperParams:
    """Covariance hyperparameters, stored as natural logs."""

    log_lambda: float = 0.0
    log_eta: float = 0.0
    log_rho: float = 0.0
    log_sigma_eps: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.to_array())):
            raise ValidationError("hyperparameters must be finite on the log scale")

    @property
    def lam(self) -> float:
        return float(np.exp(self.log_lambda))

    @property
    def eta(self) -> float:
        return float(np.exp(self.log_eta))

    @property
    def rho(self) -> float:
        return float(np.exp(self.log_rho))

    @property
    def sigma_eps(self) -> float:
        return float(np.exp(self.log_sigma_eps))

    def to_array(self) -> np.ndarray:
        return np.array(
            [self.log_lambda, self.log_eta, self.log_rho, self.log_sigma_eps], dtype=float
        )

    @classmethod
    def from_array(cls, arr) -> "GPHyperParams":
        a = np.asarray(arr, dtype=float)
        return cls(a[0], a[1], a[2], a[3])


@dataclass
class CovFactor:
    """Covariance matrix with its lower Cholesky factor."""

    C: np.ndarray
    chol: np.ndarray
    jitter_used: float = 0.0

    @property
    def n(self) -> int:
        return self.C.shape[0]


def build_covariance(t_grid, h: GPHyperParams) -> CovFactor:
    """Construct C on ``t_grid`` and factorize it, escalating jitter if needed."""
    t = np.asarray(t_grid, dtype=float)
    if t.size == 0:
        raise ValidationError("t_grid is empty")
    lam2, eta2, rho2 = h.lam**2, h.eta**2, h.rho**2
    dt2 = (t[:, None] - t[None, :]) ** 2
    C = lam2 + eta2 * np.exp(-rho2 * dt2)
    C[np.diag_indices_from(C)] += h.sigma_eps**2

    mean_diag = float(np.mean(np.diag(C)))
    jitter = 0.0
    while True:
        try:
            chol = np.linalg.cholesky(C + jitter * np.eye(t.size))
            return CovFactor(C, chol, jitter_used=jitter)
        except np.linalg.LinAlgError:
            if jitter == 0.0:
                jitter = _JITTER_START * mean_diag
            elif jitter < _JITTER_MAX * mean_diag:
                jitter *= 10.0
            else:
                raise NumericalError(
                    f"covariance not factorizable after jitter {jitter:.3e}"
                ) from None


def logistic_rate(u) -> np.ndarray:
    """Firing probability 1/(1+exp(-u)), clamped away from {0, 1}."""
    p = expit(np.asarray(u, dtype=float))
    return np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


def logit(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


def bernoulli_loglik(u, data: SpikeTrainSet) -> float:
    """Log-likelihood of all trials under independent Bernoulli(p_t) bins."""
    u = np.asarray(u, dtype=float)
    if u.shape != (data.n_bins,):
        raise ValidationError(f"latent path length {u.shape} != n_bins {data.n_bins}")
    counts = data.trials.sum(axis=0)
    p = logistic_rate(u)
    return float(np.sum(xlogy(counts, p) + xlogy(data.n_trials - counts, 1.0 - p)))


def bernoulli_loglik_grad(u, data: SpikeTrainSet) -> np.ndarray:
    """Gradient in u: spike count minus expected count, per bin."""
    counts = data.trials.sum(axis=0)
    return counts - data.n_trials * logistic_rate(u)


def sample_gp_prior(cov: CovFactor, rng: np.random.Generator) -> np.ndarray:
    """Draw u = chol @ z with z standard normal."""
    return cov.chol @ rng.standard_normal(cov.n)


def gp_logpdf(u, cov: CovFactor) -> float:
    """Log density of N(0, C) at u, using the cached Cholesky factor."""
    z = solve_triangular(cov.chol, np.asarray(u, dtype=float), lower=True)
    logdet = np.sum(np.log(np.diag(cov.chol)))
    return float(-0.5 * z @ z - logdet - 0.5 * cov.n * np.log(2.0 * np.pi))


def hyperprior_logdensity(h: GPHyperParams, sd: float = 3.0) -> float:
    """Sum of independent N(0, sd^2) log densities over the four log params."""
    x = h.to_array()
    return float(-0.5 * np.sum((x / sd) ** 2) - x.size * (np.log(sd) + 0.5 * np.log(2.0 * np.pi)))
