"""FGM copula model coupling n binary neuron margins at lag zero.

The joint CDF is [1 + sum_{j1<j2} beta_{j1j2} (1-F_{j1})(1-F_{j2})] * prod F_i
with the pairwise coefficients constrained by sum |beta| <= 1, which keeps
every orthant probability nonnegative. Pair coefficients are stored in
row-major upper-triangle order: (0,1), (0,2), ..., (1,2), ...
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.special import xlogy

from . import gp, samplers
from .data import Ensemble
from .errors import NumericalError, ValidationError

CONSTRAINT_TOL = 1e-9


def pair_indices(n: int) -> list[tuple[int, int]]:
    """Upper-triangle pair order used for beta vectors throughout."""
    return list(combinations(range(n), 2))


def n_pairs(n: int) -> int:
    return n * (n - 1) // 2


def check_beta(beta, n: int) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (n_pairs(n),):
        raise ValidationError(f"beta must have length {n_pairs(n)} for n={n}")
    if np.abs(beta).sum() > 1.0 + CONSTRAINT_TOL:
        raise ValidationError(f"constraint violated: sum |beta| = {np.abs(beta).sum()}")
    return beta


def _fgm_cdf(F: np.ndarray, beta: np.ndarray, pairs) -> float:
    s = 1.0
    for k, (j1, j2) in enumerate(pairs):
        s += beta[k] * (1.0 - F[j1]) * (1.0 - F[j2])
    return s * float(np.prod(F))


def fgm_cdf(F, beta) -> float:
    """Joint CDF value at marginal-CDF point F under the pairwise FGM copula."""
    F = np.asarray(F, dtype=float)
    if np.any((F < 0) | (F > 1)):
        raise ValidationError("marginal CDF values must lie in [0, 1]")
    beta = check_beta(beta, F.size)
    return _fgm_cdf(F, beta, pair_indices(F.size))


def fgm_binary_pmf(y, p, beta) -> float:
    """P(Y = y) for binary margins Bernoulli(p_i) coupled by the FGM copula.

    Evaluated by inclusion-exclusion over the lower-orthant corners spanned
    by the coordinates with y_i = 1, using F_i(0) = 1-p_i and F_i(1) = 1.
    """
    y = np.asarray(y, dtype=int)
    p = np.asarray(p, dtype=float)
    if y.shape != p.shape or y.ndim != 1:
        raise ValidationError("y and p must be 1-D of equal length")
    if not np.isin(y, (0, 1)).all():
        raise ValidationError("y must be binary")
    if np.any((p <= 0) | (p >= 1)):
        raise ValidationError("margins must lie strictly inside (0, 1)")
    beta = check_beta(beta, y.size)
    pairs = pair_indices(y.size)

    ones = np.flatnonzero(y == 1)
    F_hi = np.where(y == 1, 1.0, 1.0 - p)
    total = 0.0
    for mask in range(1 << ones.size):
        F = F_hi.copy()
        sign = 1.0
        for j, idx in enumerate(ones):
            if (mask >> j) & 1:
                F[idx] = 1.0 - p[idx]
                sign = -sign
        total += sign * _fgm_cdf(F, beta, pairs)
    if total < -1e-12:
        raise NumericalError(f"pmf came out negative ({total}); constraint logic violated")
    return max(total, 0.0)


def fgm_pmf_table(p, beta) -> np.ndarray:
    """All 2^n outcome probabilities; row m is the outcome whose bits, with
    neuron 0 most significant, spell m in binary."""
    p = np.asarray(p, dtype=float)
    n = p.size
    beta = check_beta(beta, n)
    m = np.arange(1 << n)
    outcomes = (m[:, None] >> (n - 1 - np.arange(n))) & 1  # (2^n, n)
    base = np.where(outcomes == 1, p, 1.0 - p).prod(axis=1)
    w = outcomes - p
    interaction = np.ones(1 << n)
    for k, (j1, j2) in enumerate(pair_indices(n)):
        interaction += beta[k] * w[:, j1] * w[:, j2]
    return base * interaction


def beta_from_zeta(zeta: float, p: float, q: float) -> float:
    """Pairwise copula coefficient implied by a co-firing factor at margins
    (p, q). The result may fall outside the FGM constraint region."""
    if not (0 < p < 1 and 0 < q < 1):
        raise ValidationError("margins must lie strictly inside (0, 1)")
    return (zeta - 1.0) / ((1.0 - p) * (1.0 - q))


def zeta_from_beta(beta: float, p: float, q: float) -> float:
    """Inverse of :func:`beta_from_zeta`."""
    if not (0 < p < 1 and 0 < q < 1):
        raise ValidationError("margins must lie strictly inside (0, 1)")
    return 1.0 + beta * (1.0 - p) * (1.0 - q)


# ---------------------------------------------------------------------------
# Likelihood over an ensemble
# ---------------------------------------------------------------------------


class CopulaLikelihood:
    """Likelihood in beta with per-bin interaction products cached.

    The cache depends only on the data and the latent paths, so one
    ``set_latents`` call serves an entire HMC trajectory over beta.
    """

    def __init__(self, data: Ensemble):
        if data.n_neurons < 2:
            raise ValidationError("copula model needs at least 2 neurons")
        self.data = data
        self.n = data.n_neurons
        self.pairs = pair_indices(self.n)
        self.trials = np.stack([s.trials for s in data.neurons]).astype(float)  # (n, R, T)
        self.counts = self.trials.sum(axis=1)  # (n, T)
        self._prods = None
        self._base = None

    def set_latents(self, us) -> None:
        us = np.asarray(us, dtype=float)
        p = gp.logistic_rate(us)  # (n, T)
        r = self.data.n_trials
        self._base = float(
            np.sum(xlogy(self.counts, p) + xlogy(r - self.counts, 1.0 - p))
        )
        w = self.trials - p[:, None, :]  # (n, R, T)
        self._prods = np.stack(
            [(w[j1] * w[j2]).ravel() for j1, j2 in self.pairs]
        )  # (n_pairs, R*T)

    def loglik_and_grad(self, beta: np.ndarray) -> tuple[float, np.ndarray]:
        m = 1.0 + beta @ self._prods
        if m.min() <= 0.0:
            return -np.inf, np.zeros_like(beta)
        return self._base + float(np.sum(np.log(m))), self._prods @ (1.0 / m)

    def loglik(self, beta: np.ndarray) -> float:
        return self.loglik_and_grad(beta)[0]


def _stacked_loglik(trials: np.ndarray, counts: np.ndarray, p: np.ndarray, beta, pairs) -> float:
    """Joint log-likelihood given stacked (n, R, T) data and (n, T) rates."""
    r = trials.shape[1]
    base = float(np.sum(xlogy(counts, p) + xlogy(r - counts, 1.0 - p)))
    w = trials - p[:, None, :]
    m = np.ones(trials.shape[1:])
    for k, (j1, j2) in enumerate(pairs):
        m += beta[k] * w[j1] * w[j2]
    if m.min() <= 0.0:
        return -np.inf
    return base + float(np.sum(np.log(m)))


def copula_loglik(latents, beta, data: Ensemble) -> float:
    """Joint log-likelihood of the ensemble at lag zero.

    Equals the sum over trials and bins of log fgm_binary_pmf at the
    observed outcome vector, with rates given by the logistic transform of
    the latent paths.
    """
    us = np.asarray(latents, dtype=float)
    if us.shape != (data.n_neurons, data.n_bins):
        raise ValidationError(f"latents must have shape (n_neurons, n_bins), got {us.shape}")
    beta = check_beta(beta, data.n_neurons)
    lik = CopulaLikelihood(data)
    lik.set_latents(us)
    return lik.loglik(beta)


def copula_loglik_grad_beta(latents, beta, data: Ensemble) -> np.ndarray:
    """Gradient of :func:`copula_loglik` in beta."""
    us = np.asarray(latents, dtype=float)
    beta = check_beta(beta, data.n_neurons)
    lik = CopulaLikelihood(data)
    lik.set_latents(us)
    return lik.loglik_and_grad(beta)[1]


# ---------------------------------------------------------------------------
# Full fit: ESS latents, slice hypers, Spherical HMC on beta
# ---------------------------------------------------------------------------


@dataclass
class CopulaState:
    blocks: list[samplers.NeuronBlock]
    beta: np.ndarray

    @property
    def latents(self) -> np.ndarray:
        return np.stack([b.u for b in self.blocks])


class CopulaModel:
    """Gibbs blocks for the n-neuron copula model."""

    def __init__(self, data: Ensemble):
        if data.n_neurons < 2:
            raise ValidationError("copula model needs at least 2 neurons")
        self.data = data
        self.pairs = pair_indices(data.n_neurons)
        self.lik = CopulaLikelihood(data)
        self.accepts: list[bool] = []
        self.energy_errors: list[float] = []

    def init_state(self) -> CopulaState:
        blocks = [samplers.make_neuron_block(s) for s in self.data.neurons]
        return CopulaState(blocks, np.zeros(len(self.pairs)))

    def update_latents(self, state: CopulaState, rng, cfg: samplers.SamplerConfig) -> None:
        us = state.latents
        for i, block in enumerate(state.blocks):
            def loglik_fn(u, i=i):
                us[i] = u
                p = gp.logistic_rate(us)
                return _stacked_loglik(self.lik.trials, self.lik.counts, p, state.beta, self.pairs)

            samplers.update_block_latent(block, loglik_fn, rng, cfg.ess_steps)
            us[i] = block.u

    def update_hypers(self, state: CopulaState, rng, cfg: samplers.SamplerConfig) -> None:
        for block in state.blocks:
            samplers.update_block_hypers(block, rng, cfg)

    def update_dependence(self, state: CopulaState, rng, cfg: samplers.SamplerConfig) -> None:
        if cfg.dep_steps < 1:
            return
        self.lik.set_latents(state.latents)
        target = samplers.make_l1_ball_target(self.lik.loglik_and_grad)
        theta_tilde = samplers.ball_to_sphere(samplers.l1_ball_to_l2(state.beta))
        for _ in range(cfg.dep_steps):
            theta_tilde, accepted, dh = samplers.spherical_hmc_step(
                theta_tilde, target, cfg.hmc_step_size, cfg.hmc_leapfrog_steps, rng
            )
            self.accepts.append(accepted)
            self.energy_errors.append(dh)
        state.beta = samplers.l2_ball_to_l1(samplers.sphere_to_ball(theta_tilde))


@dataclass
class MultiFitResult:
    """Posterior summaries for the n-neuron copula fit."""

    chain: samplers.ChainOutput
    pairs: list[tuple[int, int]]
    neuron_ids: list[str]
    beta_median: np.ndarray
    beta_intervals: np.ndarray  # (n_pairs, 2)
    significant: np.ndarray  # bool per pair
    rates: np.ndarray  # (n, T) posterior-mean rate curves
    t_grid: np.ndarray

    @property
    def beta_draws(self) -> np.ndarray:
        return self.chain.draws[:, : len(self.pairs)]

    def adjacency(self) -> list[list[str]]:
        return [
            [self.neuron_ids[j1], self.neuron_ids[j2]]
            for (j1, j2), sig in zip(self.pairs, self.significant)
            if sig
        ]

    def summary_dict(self) -> dict:
        return {
            "neurons": self.neuron_ids,
            "pairs": [
                {
                    "i": j1 + 1,
                    "j": j2 + 1,
                    "neuron_i": self.neuron_ids[j1],
                    "neuron_j": self.neuron_ids[j2],
                    "beta_median": float(self.beta_median[k]),
                    "ci95": [float(x) for x in self.beta_intervals[k]],
                    "significant": bool(self.significant[k]),
                }
                for k, (j1, j2) in enumerate(self.pairs)
            ],
        }


def fit_multi(data: Ensemble, cfg: samplers.SamplerConfig) -> MultiFitResult:
    """Run the full Gibbs sampler for the n-neuron copula model."""
    model = CopulaModel(data)
    state = model.init_state()
    rng = cfg.rng()
    n = data.n_neurons

    beta_names = [f"beta_{j1 + 1}_{j2 + 1}" for j1, j2 in model.pairs]
    hyper_names = [
        f"{h}_{i + 1}" for i in range(n) for h in ("log_lambda", "log_eta", "log_rho", "log_sigma_eps")
    ]
    names = beta_names + hyper_names
    draws = np.empty((cfg.n_kept, len(names)))
    rates = np.zeros((n, data.n_bins))
    timings: dict = {}
    k = 0
    for i in range(cfg.n_iter):
        samplers.gibbs_sweep(model, state, rng, cfg, timings)
        if i >= cfg.burn_in and (i - cfg.burn_in) % cfg.thin == 0:
            draws[k] = np.concatenate(
                [state.beta] + [b.hyper.to_array() for b in state.blocks]
            )
            rates += gp.logistic_rate(state.latents)
            k += 1

    flags = np.asarray(model.accepts, dtype=bool)
    chain = samplers.ChainOutput(
        draws,
        names,
        acceptance_rate=float(flags.mean()) if flags.size else 1.0,
        accept_flags=flags,
        timings=timings,
    )
    beta_draws = draws[:, : len(model.pairs)]
    intervals = np.array([samplers.equal_tailed_interval(beta_draws[:, k]) for k in range(len(model.pairs))])
    significant = ~((intervals[:, 0] <= 0.0) & (0.0 <= intervals[:, 1]))
    return MultiFitResult(
        chain=chain,
        pairs=model.pairs,
        neuron_ids=[s.neuron_id for s in data.neurons],
        beta_median=np.median(beta_draws, axis=0),
        beta_intervals=intervals,
        significant=significant,
        rates=rates / cfg.n_kept,
        t_grid=data.t_grid,
    )
