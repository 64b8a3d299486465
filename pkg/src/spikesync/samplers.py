"""MCMC kernels and Gibbs orchestration.

Three kernels drive every fit in this package:

* elliptical slice sampling for latent paths with Gaussian priors,
* univariate slice sampling (stepping out + shrinkage) for covariance
  hyperparameters and other scalar blocks,
* Spherical HMC for parameters constrained to a unit-ball domain, via an
  augmented point on the unit sphere and exact geodesic flow.

A Gibbs sweep updates, in order: latent paths, per-neuron hyperparameters,
then the dependence parameters.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import gp
from .data import SpikeTrainSet
from .errors import NumericalError, ValidationError

# ---------------------------------------------------------------------------
# Elliptical slice sampling
# ---------------------------------------------------------------------------


class EssState(NamedTuple):
    u: np.ndarray
    loglik: float


def ess_step(
    state: EssState,
    chol: np.ndarray,
    loglik_fn: Callable[[np.ndarray], float],
    rng: np.random.Generator,
    history: list | None = None,
) -> EssState:
    """One elliptical slice sampling update.

    inputs:
      state: current path and its cached log-likelihood
      chol: lower Cholesky factor of the Gaussian prior covariance
      loglik_fn: log-likelihood as a function of the path (may return -inf)
      history: optional list collecting (alpha_min, alpha_max) after each
        rejected proposal, for diagnostics
    output:
      new state on the slice; rejection-free, terminates with probability 1
    """
    u, loglik = state
    if not np.isfinite(loglik):
        raise NumericalError("elliptical slice: current log-likelihood is not finite")

    nu = chol @ rng.standard_normal(u.shape[0])
    log_y = loglik + np.log(rng.uniform())

    alpha = rng.uniform(0.0, 2.0 * np.pi)
    alpha_min, alpha_max = alpha - 2.0 * np.pi, alpha

    while True:
        u_prop = u * np.cos(alpha) + nu * np.sin(alpha)
        ll_prop = loglik_fn(u_prop)
        if ll_prop > log_y:
            return EssState(u_prop, ll_prop)
        # shrink the bracket towards alpha = 0 and retry
        if alpha < 0:
            alpha_min = alpha
        else:
            alpha_max = alpha
        if history is not None:
            history.append((alpha_min, alpha_max))
        alpha = rng.uniform(alpha_min, alpha_max)


# ---------------------------------------------------------------------------
# Univariate slice sampling (Neal 2003)
# ---------------------------------------------------------------------------


def slice_step(
    x,
    logdensity_fn: Callable[[np.ndarray], float],
    width: float,
    rng: np.random.Generator,
    max_stepout: int = 50,
) -> np.ndarray:
    """Coordinate-wise slice sampling with stepping out and shrinkage.

    Each coordinate in turn gets a univariate update; the stepping-out
    expansion is capped at ``max_stepout`` total widths, split at random
    between the two sides as in Neal's procedure.
    """
    x = np.array(x, dtype=float, copy=True)
    logp = logdensity_fn(x)
    if not np.isfinite(logp):
        raise NumericalError("slice sampler: log density not finite at the input point")

    def at(d, value):
        x[d], old = value, x[d]
        out = logdensity_fn(x)
        x[d] = old
        return out

    for d in range(x.size):
        log_y = logp + np.log(rng.uniform())
        lo = x[d] - width * rng.uniform()
        hi = lo + width
        j = int(np.floor(max_stepout * rng.uniform()))
        k = max_stepout - 1 - j
        while j > 0 and at(d, lo) > log_y:
            lo -= width
            j -= 1
        while k > 0 and at(d, hi) > log_y:
            hi += width
            k -= 1
        while True:
            prop = rng.uniform(lo, hi)
            lp = at(d, prop)
            if lp > log_y:
                x[d] = prop
                logp = lp
                break
            if prop < x[d]:
                lo = prop
            else:
                hi = prop
    return x


def slice_step_bounded(
    x: float,
    logdensity_fn: Callable[[float], float],
    lo: float,
    hi: float,
    rng: np.random.Generator,
) -> float:
    """Slice update for a scalar whose support is the known interval [lo, hi].

    The initial interval is the full support (no stepping out needed);
    rejected proposals shrink it towards the current point.
    """
    if not lo <= x <= hi:
        raise ValidationError(f"current point {x} outside support [{lo}, {hi}]")
    logp = logdensity_fn(x)
    if not np.isfinite(logp):
        raise NumericalError("slice sampler: log density not finite at the input point")
    log_y = logp + np.log(rng.uniform())
    a, b = lo, hi
    while True:
        prop = rng.uniform(a, b)
        if logdensity_fn(prop) > log_y:
            return prop
        if prop < x:
            a = prop
        else:
            b = prop


# ---------------------------------------------------------------------------
# Spherical HMC for unit-ball-constrained parameters
# ---------------------------------------------------------------------------


def ball_to_sphere(theta) -> np.ndarray:
    """Augment a point of the unit ball with the positive-branch coordinate
    sqrt(1 - ||theta||^2), giving a point on the unit sphere."""
    theta = np.asarray(theta, dtype=float)
    nrm2 = float(theta @ theta)
    if nrm2 > 1.0 + 1e-12:
        raise ValidationError(f"point outside the unit ball: ||theta||^2 = {nrm2}")
    last = np.sqrt(max(0.0, 1.0 - nrm2))
    return np.concatenate([theta, [last]])


def sphere_to_ball(theta_tilde) -> np.ndarray:
    """Drop the auxiliary coordinate."""
    return np.asarray(theta_tilde, dtype=float)[:-1]


def l1_ball_to_l2(beta) -> np.ndarray:
    """Bijection from the L1 ball {sum |b| <= 1} onto the L2 unit ball.

    Radially rescales by ||b||_1 / ||b||_2 (identity at 0), so the L1 norm
    of the input becomes the Euclidean norm of the output.
    """
    beta = np.asarray(beta, dtype=float)
    l1 = float(np.abs(beta).sum())
    if l1 == 0.0:
        return beta.copy()
    l2 = float(np.sqrt(beta @ beta))
    return beta * (l1 / l2)


def l2_ball_to_l1(theta) -> np.ndarray:
    """Inverse of :func:`l1_ball_to_l2`."""
    theta = np.asarray(theta, dtype=float)
    l1 = float(np.abs(theta).sum())
    if l1 == 0.0:
        return theta.copy()
    l2 = float(np.sqrt(theta @ theta))
    return theta * (l2 / l1)


def l1_map_log_jacobian(theta) -> float:
    """log |d beta / d theta| of :func:`l2_ball_to_l1` at ``theta``.

    The forward map has Jacobian determinant (||b||_1 / ||b||_2)^D, so the
    inverse contributes D * log(||theta||_2 / ||theta||_1).
    """
    theta = np.asarray(theta, dtype=float)
    l1 = float(np.abs(theta).sum())
    if l1 == 0.0:
        return 0.0
    l2 = float(np.sqrt(theta @ theta))
    return theta.size * float(np.log(l2 / l1))


def make_l1_ball_target(
    loglik_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
) -> Callable[[np.ndarray], tuple[float, np.ndarray]]:
    """Build the sphere-ready target for a density on the L1 ball.

    ``loglik_and_grad`` evaluates the log target (likelihood plus any prior
    terms, uniform by default) and its gradient in the original coordinates
    b with sum |b| <= 1. The returned function works in the L2-ball
    coordinates theta and includes both change-of-variable corrections:
    the radial-map Jacobian and the log |theta_{D+1}| sphere term.
    """

    def logdens_and_grad(theta: np.ndarray) -> tuple[float, np.ndarray]:
        theta = np.asarray(theta, dtype=float)
        d = theta.size
        l1 = float(np.abs(theta).sum())
        l2sq = float(theta @ theta)
        l2 = np.sqrt(l2sq)

        beta = theta * (l2 / l1) if l1 > 0.0 else theta
        ll, g_beta = loglik_and_grad(beta)

        # sphere coordinate theta_{D+1}^2 = 1 - ||theta||^2
        aux_sq = 1.0 - l2sq
        if aux_sq <= 0.0:
            return -np.inf, np.zeros(d)
        logdens = ll + 0.5 * np.log(aux_sq)
        grad = -theta / aux_sq

        if l1 > 0.0:
            sign = np.sign(theta)
            # d beta / d theta = (l2/l1) I + theta * grad(l2/l1)^T
            grad_ratio = theta / (l2 * l1) - l2 * sign / l1**2
            grad = grad + (l2 / l1) * g_beta + grad_ratio * float(theta @ g_beta)
            # radial-map Jacobian: D * log(l2 / l1)
            logdens += d * np.log(l2 / l1)
            grad += d * (theta / l2sq - sign / l1)
        else:
            grad = grad + g_beta

        return float(logdens), grad

    return logdens_and_grad


def _tangent_kick(theta_tilde: np.ndarray, grad_u: np.ndarray) -> np.ndarray:
    # ([I_D; 0] - theta_tilde theta^T) grad_u, the tangent-space gradient
    full = np.append(grad_u, 0.0)
    return full - theta_tilde * float(theta_tilde[:-1] @ grad_u)


def geodesic_rotate(theta_tilde, v, step_size: float):
    """Exact great-circle flow for time ``step_size``; preserves norms."""
    speed = float(np.sqrt(v @ v))
    if speed < 1e-300:
        return np.array(theta_tilde, copy=True), np.array(v, copy=True)
    a = speed * step_size
    th_new = theta_tilde * np.cos(a) + (v / speed) * np.sin(a)
    v_new = -theta_tilde * speed * np.sin(a) + v * np.cos(a)
    th_new /= np.sqrt(th_new @ th_new)
    return th_new, v_new


def spherical_hmc_step(
    theta_tilde: np.ndarray,
    logdens_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    step_size: float,
    n_leapfrog: int,
    rng: np.random.Generator,
    momentum: np.ndarray | None = None,
    trace: list | None = None,
) -> tuple[np.ndarray, bool, float]:
    """One Spherical HMC transition on the unit sphere.

    inputs:
      theta_tilde: current extended point, unit Euclidean norm
      logdens_and_grad: log target and gradient in the first D coordinates,
        including the log |theta_{D+1}| change-of-variable term
      momentum: optional initial momentum (drawn N(0, I) when omitted)
      trace: optional list collecting the point after every geodesic step
    output:
      (next point, accepted flag, Hamiltonian error of the trajectory)

    The integrator alternates half-step tangent-gradient kicks with exact
    geodesic rotation; equator crossings reflect the auxiliary coordinate
    back to the positive hemisphere.
    """
    if step_size <= 0 or n_leapfrog < 1:
        raise ValidationError("step_size must be > 0 and n_leapfrog >= 1")
    th0 = np.asarray(theta_tilde, dtype=float)

    ld, grad_ld = logdens_and_grad(th0[:-1])
    if not np.isfinite(ld) or not np.all(np.isfinite(grad_ld)):
        raise NumericalError("spherical HMC: target not finite at the current point")

    v = rng.standard_normal(th0.size) if momentum is None else np.asarray(momentum, float)
    v = v - th0 * float(th0 @ v)
    h0 = -ld + 0.5 * float(v @ v)

    th, grad_u = th0, -grad_ld
    for _ in range(n_leapfrog):
        v = v - 0.5 * step_size * _tangent_kick(th, grad_u)
        th, v = geodesic_rotate(th, v, step_size)
        if th[-1] < 0.0:  # bounce off the constraint boundary
            th = th.copy()
            th[-1] = -th[-1]
            v = v.copy()
            v[-1] = -v[-1]
        if trace is not None:
            trace.append(th.copy())
        ld, grad_ld = logdens_and_grad(th[:-1])
        grad_u = -grad_ld
        if not np.all(np.isfinite(grad_u)):
            ld = -np.inf  # force rejection of a diverged trajectory
            break
        v = v - 0.5 * step_size * _tangent_kick(th, grad_u)

    h1 = -ld + 0.5 * float(v @ v)
    delta_h = h1 - h0
    accepted = np.isfinite(delta_h) and np.log(rng.uniform()) < -delta_h
    return (th if accepted else th0), bool(accepted), float(delta_h)


# ---------------------------------------------------------------------------
# Configuration and chain output
# ---------------------------------------------------------------------------


@dataclass
class SamplerConfig:
    """Settings shared by all fits; counts are per Gibbs sweep."""

    n_iter: int = 3000
    burn_in: int = 1000
    thin: int = 1
    seed: int = 0
    ess_steps: int = 1
    hyper_steps: int = 1
    dep_steps: int = 1
    slice_width: float = 1.0
    slice_max_stepout: int = 50
    hmc_step_size: float = 0.05
    hmc_leapfrog_steps: int = 10
    max_lag: int = 10
    hyper_prior_sd: float = 3.0

    def __post_init__(self):
        if self.burn_in >= self.n_iter:
            raise ValidationError("burn_in must be smaller than n_iter")
        if self.thin < 1:
            raise ValidationError("thin must be >= 1")

    @property
    def n_kept(self) -> int:
        return (self.n_iter - self.burn_in + self.thin - 1) // self.thin

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed))


@dataclass
class ChainOutput:
    """Post-burn-in draws, one column per parameter."""

    draws: np.ndarray
    param_names: list[str]
    acceptance_rate: float = 1.0
    accept_flags: np.ndarray | None = None
    timings: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.draws.ndim != 2 or self.draws.shape[1] != len(self.param_names):
            raise ValidationError("draws must be (iterations, parameters)")
        if self.accept_flags is not None and len(self.accept_flags):
            rate = float(np.mean(self.accept_flags))
            if abs(rate - self.acceptance_rate) > 1e-12:
                raise ValidationError("acceptance_rate inconsistent with accept flags")

    def column(self, name: str) -> np.ndarray:
        return self.draws[:, self.param_names.index(name)]

    def to_csv(self, path) -> None:
        header = ",".join(self.param_names)
        np.savetxt(path, self.draws, delimiter=",", header=header, comments="")


def equal_tailed_interval(draws, level: float = 0.95) -> tuple[float, float]:
    """Equal-tailed posterior interval (the (1-level)/2 quantile pair)."""
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(np.asarray(draws, dtype=float), [alpha, 1.0 - alpha])
    return float(lo), float(hi)


# ---------------------------------------------------------------------------
# Per-neuron Gibbs blocks and the sweep
# ---------------------------------------------------------------------------


@dataclass
class NeuronBlock:
    """Mutable per-neuron state: latent path, hyperparameters, cached factor."""

    data: SpikeTrainSet
    u: np.ndarray
    hyper: gp.GPHyperParams
    cov: gp.CovFactor


def make_neuron_block(data: SpikeTrainSet, hyper: gp.GPHyperParams | None = None) -> NeuronBlock:
    hyper = hyper if hyper is not None else gp.GPHyperParams()
    cov = gp.build_covariance(data.t_grid, hyper)
    return NeuronBlock(data, np.zeros(data.n_bins), hyper, cov)


def update_block_latent(
    block: NeuronBlock,
    loglik_fn: Callable[[np.ndarray], float],
    rng: np.random.Generator,
    n_steps: int,
) -> None:
    """ESS updates of one neuron's latent path under the current model."""
    if n_steps < 1:
        return
    state = EssState(block.u, loglik_fn(block.u))
    for _ in range(n_steps):
        state = ess_step(state, block.cov.chol, loglik_fn, rng)
    block.u = state.u


def update_block_hypers(block: NeuronBlock, rng: np.random.Generator, cfg: SamplerConfig) -> None:
    """Slice-sample the four log hyperparameters given the latent path."""
    if cfg.hyper_steps < 1:
        return
    t_grid = block.data.t_grid
    u = block.u

    def target(logs: np.ndarray) -> float:
        try:
            h = gp.GPHyperParams.from_array(logs)
            cov = gp.build_covariance(t_grid, h)
        except (NumericalError, ValidationError):
            return -np.inf
        return gp.gp_logpdf(u, cov) + gp.hyperprior_logdensity(h, cfg.hyper_prior_sd)

    logs = block.hyper.to_array()
    for _ in range(cfg.hyper_steps):
        logs = slice_step(logs, target, cfg.slice_width, rng, cfg.slice_max_stepout)
    block.hyper = gp.GPHyperParams.from_array(logs)
    block.cov = gp.build_covariance(t_grid, block.hyper)


def gibbs_sweep(model, state, rng: np.random.Generator, cfg: SamplerConfig, timings: dict | None = None):
    """One sweep of the overall sampler: latents, then hyperparameters, then
    dependence parameters."""
    t0 = time.perf_counter()
    model.update_latents(state, rng, cfg)
    t1 = time.perf_counter()
    model.update_hypers(state, rng, cfg)
    t2 = time.perf_counter()
    model.update_dependence(state, rng, cfg)
    t3 = time.perf_counter()
    if timings is not None:
        timings["latents"] = timings.get("latents", 0.0) + (t1 - t0)
        timings["hypers"] = timings.get("hypers", 0.0) + (t2 - t1)
        timings["dependence"] = timings.get("dependence", 0.0) + (t3 - t2)
    return state


# ---------------------------------------------------------------------------
# Single-neuron fit (no dependence block): GP binary classification
# ---------------------------------------------------------------------------


class SingleNeuronModel:
    """One neuron, Bernoulli observations; the dependence block is empty."""

    def __init__(self, data: SpikeTrainSet):
        self.data = data

    def init_state(self) -> NeuronBlock:
        return make_neuron_block(self.data)

    def update_latents(self, block: NeuronBlock, rng, cfg: SamplerConfig) -> None:
        update_block_latent(
            block, lambda u: gp.bernoulli_loglik(u, self.data), rng, cfg.ess_steps
        )

    def update_hypers(self, block: NeuronBlock, rng, cfg: SamplerConfig) -> None:
        update_block_hypers(block, rng, cfg)

    def update_dependence(self, block: NeuronBlock, rng, cfg: SamplerConfig) -> None:
        pass


@dataclass
class SingleNeuronFit:
    """Posterior summary of one neuron's firing-rate curve."""

    t_grid: np.ndarray
    rate_draws: np.ndarray  # (n_kept, T)
    rate_mean: np.ndarray
    rate_lower: np.ndarray
    rate_upper: np.ndarray
    chain: ChainOutput


def fit_single(data: SpikeTrainSet, cfg: SamplerConfig) -> SingleNeuronFit:
    """Posterior of the firing-rate curve for a single neuron."""
    model = SingleNeuronModel(data)
    block = model.init_state()
    rng = cfg.rng()

    rate_draws = np.empty((cfg.n_kept, data.n_bins))
    hyper_draws = np.empty((cfg.n_kept, 4))
    timings: dict = {}
    k = 0
    for i in range(cfg.n_iter):
        gibbs_sweep(model, block, rng, cfg, timings)
        if i >= cfg.burn_in and (i - cfg.burn_in) % cfg.thin == 0:
            rate_draws[k] = gp.logistic_rate(block.u)
            hyper_draws[k] = block.hyper.to_array()
            k += 1

    chain = ChainOutput(
        hyper_draws,
        ["log_lambda", "log_eta", "log_rho", "log_sigma_eps"],
        timings=timings,
    )
    lower, upper = np.quantile(rate_draws, [0.025, 0.975], axis=0)
    return SingleNeuronFit(
        data.t_grid, rate_draws, rate_draws.mean(axis=0), lower, upper, chain
    )
