"""Two-neuron synchrony model with an excess co-firing factor and a lag.

The joint probability of spikes at bins (t, t+L) is the product of the two
marginals times a factor zeta: zeta = 1 means independence, zeta > 1 excess
co-firing, zeta < 1 suppression. Feasibility of zeta at margins (p, q) is
bounded by max(p+q-1, 0)/(pq) below and min(p, q)/(pq) above. The lag L
ranges over the integers in [-K, K]; bins left unpaired at the series
boundary enter the likelihood through their marginals only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from . import gp, samplers
from .data import SpikeTrainSet
from .errors import NumericalError, ValidationError

_FEAS_TOL = 1e-12


def zeta_bounds(p, q):
    """Feasibility interval (lo, hi) for the co-firing factor at margins p, q.

    Always contains 1, so independence is feasible for any valid margins.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any((p <= 0) | (p >= 1)) or np.any((q <= 0) | (q >= 1)):
        raise ValidationError("margins must lie strictly inside (0, 1)")
    lo = np.maximum(p + q - 1.0, 0.0) / (p * q)
    hi = np.minimum(p, q) / (p * q)
    if lo.ndim == 0:
        return float(lo), float(hi)
    return lo, hi


def zeta_support(p, q, lag: int) -> tuple[float, float]:
    """Intersection of the per-bin zeta bounds over all pairings at ``lag``."""
    ia, ib = _paired_slices(len(p), lag)
    lo, hi = zeta_bounds(np.asarray(p)[ia], np.asarray(q)[ib])
    return float(np.max(lo)), float(np.min(hi))


@dataclass
class JointTable:
    """Joint outcome probabilities for one (y_t, z_{t+L}) cell."""

    p11: float
    p10: float
    p01: float
    p00: float

    def as_array(self) -> np.ndarray:
        return np.array([self.p11, self.p10, self.p01, self.p00])


def joint_table(p: float, q: float, zeta: float) -> JointTable:
    """Four-cell joint table with P(1,1) = p*q*zeta; errors when infeasible."""
    lo, hi = zeta_bounds(p, q)
    if not lo - _FEAS_TOL <= zeta <= hi + _FEAS_TOL:
        raise ValidationError(f"zeta={zeta} outside feasible interval [{lo}, {hi}]")
    p11 = p * q * zeta
    table = JointTable(p11, p - p11, q - p11, 1.0 - p - q + p11)
    arr = table.as_array()
    if arr.min() < -_FEAS_TOL:
        raise ValidationError(f"joint table has a negative cell: {arr}")
    return table


def _paired_slices(n_bins: int, lag: int) -> tuple[slice, slice]:
    """Index ranges pairing bin t of the first series with t+lag of the second."""
    if abs(lag) >= n_bins:
        raise ValidationError(f"|lag|={abs(lag)} must be smaller than n_bins={n_bins}")
    start = max(0, -lag)
    length = n_bins - abs(lag)
    return slice(start, start + length), slice(start + lag, start + lag + length)


def _lag_counts(data_a: SpikeTrainSet, data_b: SpikeTrainSet, lag: int) -> dict:
    """Per-bin outcome counts for the paired and unpaired index sets."""
    sa, sb = _paired_slices(data_a.n_bins, lag)
    ya = data_a.trials[:, sa]
    zb = data_b.trials[:, sb]
    n11 = (ya * zb).sum(axis=0)
    na1 = ya.sum(axis=0)
    nb1 = zb.sum(axis=0)
    r = data_a.n_trials
    only_a = np.ones(data_a.n_bins, dtype=bool)
    only_a[sa] = False
    only_b = np.ones(data_b.n_bins, dtype=bool)
    only_b[sb] = False
    return {
        "sa": sa,
        "sb": sb,
        "n11": n11,
        "n10": na1 - n11,
        "n01": nb1 - n11,
        "n00": r - na1 - nb1 + n11,
        "only_a": only_a,
        "ca": data_a.trials[:, only_a].sum(axis=0),
        "only_b": only_b,
        "cb": data_b.trials[:, only_b].sum(axis=0),
        "r": r,
    }


def _loglik_from_counts(counts: dict, p, q, zeta: float, lag: int, on_infeasible: str) -> float:
    pa = p[counts["sa"]]
    qb = q[counts["sb"]]
    p11 = zeta * pa * qb
    p10 = pa - p11
    p01 = qb - p11
    p00 = 1.0 - pa - qb + p11
    cells = np.stack([p11, p10, p01, p00])
    if cells.min() < -_FEAS_TOL:
        if on_infeasible == "neginf":
            return -np.inf
        raise ValidationError(
            f"zeta={zeta} infeasible at lag={lag}: joint cell below 0"
        )
    np.clip(cells, 0.0, None, out=cells)
    ll = float(
        np.sum(xlogy(counts["n11"], cells[0]))
        + np.sum(xlogy(counts["n10"], cells[1]))
        + np.sum(xlogy(counts["n01"], cells[2]))
        + np.sum(xlogy(counts["n00"], cells[3]))
    )
    r = counts["r"]
    pa_only = p[counts["only_a"]]
    qb_only = q[counts["only_b"]]
    ll += float(np.sum(xlogy(counts["ca"], pa_only) + xlogy(r - counts["ca"], 1.0 - pa_only)))
    ll += float(np.sum(xlogy(counts["cb"], qb_only) + xlogy(r - counts["cb"], 1.0 - qb_only)))
    return ll


def pair_loglik_at_lag(
    u,
    v,
    zeta: float,
    lag: int,
    data_a: SpikeTrainSet,
    data_b: SpikeTrainSet,
    on_infeasible: str = "raise",
) -> float:
    """Joint log-likelihood of both spike trains at a fixed lag.

    Bins paired as (t, t+lag) contribute through the four-cell joint table;
    the boundary bins of each series contribute through their marginals.
    """
    if data_a.trials.shape != data_b.trials.shape:
        raise ValidationError("the two spike train sets must share trials and bins")
    p = gp.logistic_rate(u)
    q = gp.logistic_rate(v)
    if p.shape != (data_a.n_bins,) or q.shape != (data_b.n_bins,):
        raise ValidationError("latent path lengths must match n_bins")
    counts = _lag_counts(data_a, data_b, lag)
    return _loglik_from_counts(counts, p, q, zeta, lag, on_infeasible)


class PairLikelihood:
    """Cached-count evaluator for the pairwise likelihood over lags in [-K, K]."""

    def __init__(self, data_a: SpikeTrainSet, data_b: SpikeTrainSet, max_lag: int):
        if data_a.trials.shape != data_b.trials.shape:
            raise ValidationError("the two spike train sets must share trials and bins")
        if max_lag < 0:
            raise ValidationError("max_lag must be >= 0")
        if max_lag >= data_a.n_bins:
            raise ValidationError("max_lag must be smaller than the number of bins")
        self.data_a = data_a
        self.data_b = data_b
        self.max_lag = max_lag
        self._counts = {k: _lag_counts(data_a, data_b, k) for k in range(-max_lag, max_lag + 1)}

    def loglik_rates(self, p, q, zeta: float, lag: int, on_infeasible: str = "neginf") -> float:
        return _loglik_from_counts(self._counts[lag], p, q, zeta, lag, on_infeasible)

    def loglik(self, u, v, zeta: float, lag: int, on_infeasible: str = "neginf") -> float:
        return self.loglik_rates(gp.logistic_rate(u), gp.logistic_rate(v), zeta, lag, on_infeasible)


# ---------------------------------------------------------------------------
# Gibbs blocks for (zeta, L) and the full pairwise fit
# ---------------------------------------------------------------------------


@dataclass
class PairState:
    a: samplers.NeuronBlock
    b: samplers.NeuronBlock
    zeta: float
    lag: int


def update_zeta(state: PairState, lik: PairLikelihood, rng: np.random.Generator) -> PairState:
    """Slice update of zeta on its full conditional (uniform prior over the
    feasibility interval implied by the current rates and lag)."""
    p = gp.logistic_rate(state.a.u)
    q = gp.logistic_rate(state.b.u)
    lo, hi = zeta_support(p, q, state.lag)
    state.zeta = samplers.slice_step_bounded(
        state.zeta,
        lambda z: lik.loglik_rates(p, q, z, state.lag),
        lo,
        hi,
        rng,
    )
    return state


def update_lag(state: PairState, lik: PairLikelihood, rng: np.random.Generator) -> PairState:
    """Exact discrete Gibbs draw of the lag from its full conditional."""
    k_max = lik.max_lag
    if k_max == 0:
        state.lag = 0
        return state
    p = gp.logistic_rate(state.a.u)
    q = gp.logistic_rate(state.b.u)
    lags = np.arange(-k_max, k_max + 1)
    logw = np.array([lik.loglik_rates(p, q, state.zeta, int(k)) for k in lags])
    top = logw.max()
    if not np.isfinite(top):
        raise NumericalError("lag update: no feasible lag for the current state")
    w = np.exp(logw - top)
    w /= w.sum()
    state.lag = int(rng.choice(lags, p=w))
    return state


class PairModel:
    """Gibbs blocks for the two-neuron model."""

    def __init__(self, data_a: SpikeTrainSet, data_b: SpikeTrainSet, max_lag: int):
        self.lik = PairLikelihood(data_a, data_b, max_lag)
        self.data_a = data_a
        self.data_b = data_b

    def init_state(self) -> PairState:
        return PairState(
            samplers.make_neuron_block(self.data_a),
            samplers.make_neuron_block(self.data_b),
            zeta=1.0,
            lag=0,
        )

    def update_latents(self, state: PairState, rng, cfg: samplers.SamplerConfig) -> None:
        samplers.update_block_latent(
            state.a,
            lambda u: self.lik.loglik(u, state.b.u, state.zeta, state.lag),
            rng,
            cfg.ess_steps,
        )
        samplers.update_block_latent(
            state.b,
            lambda v: self.lik.loglik(state.a.u, v, state.zeta, state.lag),
            rng,
            cfg.ess_steps,
        )

    def update_hypers(self, state: PairState, rng, cfg: samplers.SamplerConfig) -> None:
        samplers.update_block_hypers(state.a, rng, cfg)
        samplers.update_block_hypers(state.b, rng, cfg)

    def update_dependence(self, state: PairState, rng, cfg: samplers.SamplerConfig) -> None:
        for _ in range(cfg.dep_steps):
            update_zeta(state, self.lik, rng)
            update_lag(state, self.lik, rng)


@dataclass
class PairFitResult:
    """Posterior summaries for a two-neuron synchrony fit."""

    chain: samplers.ChainOutput
    zeta_median: float
    zeta_interval: tuple[float, float]
    lag_posterior: dict[int, float]
    significant: bool | None  # None when too few draws for a decision
    rate_a: np.ndarray
    rate_b: np.ndarray
    t_grid: np.ndarray

    @property
    def zeta_draws(self) -> np.ndarray:
        return self.chain.column("zeta")

    @property
    def lag_draws(self) -> np.ndarray:
        return self.chain.column("lag").astype(int)

    def summary_dict(self) -> dict:
        return {
            "zeta_median": self.zeta_median,
            "zeta_ci95": list(self.zeta_interval),
            "lag_posterior": {str(k): v for k, v in sorted(self.lag_posterior.items())},
            "significant": self.significant,
        }


_HYPER_NAMES = ["log_lambda", "log_eta", "log_rho", "log_sigma_eps"]


def fit_pair(
    data_a: SpikeTrainSet, data_b: SpikeTrainSet, cfg: samplers.SamplerConfig
) -> PairFitResult:
    """Run the full Gibbs sampler for the two-neuron model."""
    model = PairModel(data_a, data_b, cfg.max_lag)
    state = model.init_state()
    rng = cfg.rng()

    names = ["zeta", "lag"] + [f"{n}_a" for n in _HYPER_NAMES] + [f"{n}_b" for n in _HYPER_NAMES]
    draws = np.empty((cfg.n_kept, len(names)))
    rate_a = np.zeros(data_a.n_bins)
    rate_b = np.zeros(data_b.n_bins)
    timings: dict = {}
    k = 0
    for i in range(cfg.n_iter):
        samplers.gibbs_sweep(model, state, rng, cfg, timings)
        if i >= cfg.burn_in and (i - cfg.burn_in) % cfg.thin == 0:
            draws[k] = np.concatenate(
                [[state.zeta, state.lag], state.a.hyper.to_array(), state.b.hyper.to_array()]
            )
            rate_a += gp.logistic_rate(state.a.u)
            rate_b += gp.logistic_rate(state.b.u)
            k += 1

    chain = samplers.ChainOutput(draws, names, timings=timings)
    zeta_draws = chain.column("zeta")
    lag_draws = chain.column("lag").astype(int)
    lag_posterior = {
        int(k_): float(np.mean(lag_draws == k_))
        for k_ in range(-cfg.max_lag, cfg.max_lag + 1)
    }
    return PairFitResult(
        chain=chain,
        zeta_median=float(np.median(zeta_draws)),
        zeta_interval=samplers.equal_tailed_interval(zeta_draws),
        lag_posterior=lag_posterior,
        significant=synchrony_decision(zeta_draws) if zeta_draws.size >= 100 else None,
        rate_a=rate_a / cfg.n_kept,
        rate_b=rate_b / cfg.n_kept,
        t_grid=data_a.t_grid,
    )


def synchrony_decision(zeta_draws, level: float = 0.95, min_draws: int = 100) -> bool:
    """Significant iff the equal-tailed posterior interval excludes 1."""
    draws = np.asarray(zeta_draws, dtype=float)
    if draws.size < min_draws:
        raise ValidationError(f"need at least {min_draws} draws, got {draws.size}")
    lo, hi = samplers.equal_tailed_interval(draws, level)
    return not (lo <= 1.0 <= hi)
