"""Generators for the simulation designs and the power/sensitivity drivers.

Rate functions come from a tiny closed vocabulary (const, sin, cos, linear)
so scenario files stay declarative and reproducible. All generators are
deterministic given a seed; replicate experiments derive per-replicate
streams by spawn keys, so aggregation order never matters.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from joblib import Parallel, delayed

from . import copula, pairwise
from .data import Ensemble, SpikeTrainSet, bin_centers
from .errors import ValidationError
from .samplers import SamplerConfig

PAIR_KINDS = ("independent-pair", "exact-sync-pair", "lagged-pair")
ALL_KINDS = ("single-neuron",) + PAIR_KINDS + ("regression-pair", "copula-multi")


@dataclass
class RateSpec:
    """Closed-form firing-rate curve: offset + amplitude * f(frequency * t)."""

    kind: str  # const | sin | cos | linear
    offset: float = 0.0
    amplitude: float = 0.0
    frequency: float = 0.0  # radians per unit time; unused for const/linear

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "const":
            return np.full_like(t, self.offset)
        if self.kind == "sin":
            return self.offset + self.amplitude * np.sin(self.frequency * t)
        if self.kind == "cos":
            return self.offset + self.amplitude * np.cos(self.frequency * t)
        if self.kind == "linear":
            return self.offset + self.amplitude * t
        raise ValidationError(f"unknown rate kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "offset": self.offset,
            "amplitude": self.amplitude,
            "frequency": self.frequency,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RateSpec":
        try:
            return cls(
                kind=str(d["kind"]),
                offset=float(d.get("offset", 0.0)),
                amplitude=float(d.get("amplitude", 0.0)),
                frequency=float(d.get("frequency", 0.0)),
            )
        except KeyError as exc:
            raise ValidationError(f"rate spec missing field {exc}") from exc


def _eval_rate(rate: RateSpec | Callable, t: np.ndarray, label: str) -> np.ndarray:
    vals = np.asarray(rate(t), dtype=float)
    if vals.shape != t.shape:
        raise ValidationError(f"{label}: rate function must map the grid elementwise")
    if np.any(vals <= 0.0) or np.any(vals >= 1.0):
        raise ValidationError(f"{label}: rates must lie strictly inside (0, 1) on the grid")
    return vals


@dataclass
class ScenarioSpec:
    """One simulated dataset design."""

    kind: str
    n_trials: int
    n_bins: int
    seed: int
    rates: list[RateSpec] = field(default_factory=list)
    t_max: float = 1.0
    zeta: float = 1.0
    lag_dist: dict[int, float] = field(default_factory=lambda: {0: 1.0})
    b0: float | None = None
    b1: float | None = None
    beta: list[float] | None = None

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise ValidationError(f"unknown scenario kind {self.kind!r}; choose from {ALL_KINDS}")
        if self.n_trials < 1 or self.n_bins < 1:
            raise ValidationError("n_trials and n_bins must be positive")
        if self.kind in PAIR_KINDS:
            total = sum(self.lag_dist.values())
            if abs(total - 1.0) > 1e-9:
                raise ValidationError(f"lag distribution sums to {total}, expected 1")
            if self.kind == "independent-pair" and self.zeta != 1.0:
                raise ValidationError("independent-pair requires zeta = 1")
            if self.kind == "exact-sync-pair" and set(self.lag_dist) != {0}:
                raise ValidationError("exact-sync-pair requires the lag to be fixed at 0")
        if self.kind == "regression-pair" and (self.b0 is None or self.b1 is None):
            raise ValidationError("regression-pair requires b0 and b1")
        if self.kind == "copula-multi" and self.beta is None:
            raise ValidationError("copula-multi requires a beta vector")

    @property
    def time_grid(self) -> np.ndarray:
        return bin_centers(self.n_bins) * self.t_max

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "n_trials": self.n_trials,
            "n_bins": self.n_bins,
            "seed": self.seed,
            "t_max": self.t_max,
            "rates": [r.to_dict() for r in self.rates],
        }
        if self.kind in PAIR_KINDS:
            d["zeta"] = self.zeta
            d["lag_dist"] = {str(k): v for k, v in self.lag_dist.items()}
        if self.kind == "regression-pair":
            d["b0"], d["b1"] = self.b0, self.b1
        if self.kind == "copula-multi":
            d["beta"] = list(self.beta)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        try:
            return cls(
                kind=str(d["kind"]),
                n_trials=int(d["n_trials"]),
                n_bins=int(d["n_bins"]),
                seed=int(d["seed"]),
                rates=[RateSpec.from_dict(r) for r in d.get("rates", [])],
                t_max=float(d.get("t_max", 1.0)),
                zeta=float(d.get("zeta", 1.0)),
                lag_dist={int(k): float(v) for k, v in d.get("lag_dist", {0: 1.0}).items()},
                b0=None if d.get("b0") is None else float(d["b0"]),
                b1=None if d.get("b1") is None else float(d["b1"]),
                beta=None if d.get("beta") is None else [float(x) for x in d["beta"]],
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"malformed scenario spec: {exc}") from exc


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------


def simulate_single(rate, n_trials: int, n_bins: int, rng, t_max: float = 1.0,
                    neuron_id: str = "n0", bin_width: float | None = None) -> SpikeTrainSet:
    """Independent Bernoulli(p_t) spikes per trial and bin."""
    t = bin_centers(n_bins) * t_max
    p = _eval_rate(rate, t, neuron_id) if callable(rate) else np.asarray(rate, float)
    trials = (rng.random((n_trials, n_bins)) < p).astype(np.uint8)
    return SpikeTrainSet(neuron_id, trials, bin_width or t_max / n_bins)


def _draw_pair_trial(p, q, zeta, lag, rng):
    n_bins = p.size
    sa, sb = pairwise._paired_slices(n_bins, lag)
    pa, qb = p[sa], q[sb]
    p11 = zeta * pa * qb
    c1 = p11
    c2 = p11 + (pa - p11)
    c3 = c2 + (qb - p11)
    u = rng.random(pa.size)
    y = np.empty(n_bins, dtype=np.uint8)
    z = np.empty(n_bins, dtype=np.uint8)
    y[sa] = u < c2
    z[sb] = (u < c1) | ((u >= c2) & (u < c3))
    only_a = np.ones(n_bins, dtype=bool)
    only_a[sa] = False
    only_b = np.ones(n_bins, dtype=bool)
    only_b[sb] = False
    y[only_a] = rng.random(only_a.sum()) < p[only_a]
    z[only_b] = rng.random(only_b.sum()) < q[only_b]
    return y, z


def simulate_pair(spec: ScenarioSpec, rng) -> tuple[SpikeTrainSet, SpikeTrainSet]:
    """Correlated pair: per trial, draw a lag, then joint outcomes on the
    overlap and marginal outcomes on the boundary bins."""
    if spec.kind not in PAIR_KINDS:
        raise ValidationError(f"simulate_pair cannot handle kind {spec.kind!r}")
    if len(spec.rates) != 2:
        raise ValidationError("pair scenarios need exactly 2 rate functions")
    t = spec.time_grid
    p = _eval_rate(spec.rates[0], t, "rate A")
    q = _eval_rate(spec.rates[1], t, "rate B")
    lags = np.array(sorted(spec.lag_dist), dtype=int)
    probs = np.array([spec.lag_dist[int(k)] for k in lags])
    for k in lags:
        lo, hi = pairwise.zeta_support(p, q, int(k))
        if not lo <= spec.zeta <= hi:
            raise ValidationError(
                f"zeta={spec.zeta} infeasible at lag {k}: support [{lo:.4g}, {hi:.4g}]"
            )
    bw = spec.t_max / spec.n_bins
    ya = np.empty((spec.n_trials, spec.n_bins), dtype=np.uint8)
    zb = np.empty((spec.n_trials, spec.n_bins), dtype=np.uint8)
    for r in range(spec.n_trials):
        lag = int(lags[rng.choice(lags.size, p=probs)])
        ya[r], zb[r] = _draw_pair_trial(p, q, spec.zeta, lag, rng)
    return SpikeTrainSet("n0", ya, bw), SpikeTrainSet("n1", zb, bw)


def simulate_regression_pair(b0: float, b1: float, rate, n_trials: int, n_bins: int,
                             rng, t_max: float = 1.0) -> tuple[SpikeTrainSet, SpikeTrainSet]:
    """First neuron Bernoulli(p_t); second Bernoulli(b0 + b1 * y_t)."""
    for y in (0, 1):
        pz = b0 + b1 * y
        if not 0.0 <= pz <= 1.0:
            raise ValidationError(f"b0 + b1*{y} = {pz} outside [0, 1]")
    t = bin_centers(n_bins) * t_max
    p = _eval_rate(rate, t, "rate A") if callable(rate) else np.asarray(rate, float)
    bw = t_max / n_bins
    ya = (rng.random((n_trials, n_bins)) < p).astype(np.uint8)
    zb = (rng.random((n_trials, n_bins)) < b0 + b1 * ya).astype(np.uint8)
    return SpikeTrainSet("n0", ya, bw), SpikeTrainSet("n1", zb, bw)


def simulate_copula(rates, beta, n_trials: int, n_bins: int, rng,
                    t_max: float = 1.0) -> Ensemble:
    """n-neuron ensemble drawn per bin from the exact 2^n FGM outcome table."""
    t = bin_centers(n_bins) * t_max
    p = np.stack([_eval_rate(r, t, f"rate {i}") for i, r in enumerate(rates)])
    n = p.shape[0]
    beta = copula.check_beta(beta, n)
    if n > 12:
        raise ValidationError("exact-enumeration generator supports up to 12 neurons")
    tables = np.stack([copula.fgm_pmf_table(p[:, j], beta) for j in range(n_bins)])  # (T, 2^n)
    cum = np.cumsum(tables, axis=1)
    u = rng.random((n_trials, n_bins))
    idx = (u[:, :, None] > cum[None, :, :]).sum(axis=2)
    idx = np.minimum(idx, (1 << n) - 1)
    bw = t_max / n_bins
    neurons = [
        SpikeTrainSet(f"n{i}", ((idx >> (n - 1 - i)) & 1).astype(np.uint8), bw)
        for i in range(n)
    ]
    return Ensemble(neurons)


def simulate(spec: ScenarioSpec, rng: np.random.Generator | None = None) -> Ensemble:
    """Dispatch a scenario spec to its generator; returns an ensemble."""
    rng = rng if rng is not None else np.random.default_rng(np.random.SeedSequence(spec.seed))
    if spec.kind == "single-neuron":
        if len(spec.rates) != 1:
            raise ValidationError("single-neuron scenarios need exactly 1 rate function")
        return Ensemble(
            [simulate_single(spec.rates[0], spec.n_trials, spec.n_bins, rng, spec.t_max)]
        )
    if spec.kind in PAIR_KINDS:
        a, b = simulate_pair(spec, rng)
        return Ensemble([a, b])
    if spec.kind == "regression-pair":
        if len(spec.rates) != 1:
            raise ValidationError("regression-pair scenarios need exactly 1 rate function")
        a, b = simulate_regression_pair(
            spec.b0, spec.b1, spec.rates[0], spec.n_trials, spec.n_bins, rng, spec.t_max
        )
        return Ensemble([a, b])
    if spec.kind == "copula-multi":
        return simulate_copula(spec.rates, spec.beta, spec.n_trials, spec.n_bins, rng, spec.t_max)
    raise ValidationError(f"unknown scenario kind {spec.kind!r}")


def sensitivity_noise(data: SpikeTrainSet, noise_rate: float, rng) -> SpikeTrainSet:
    """Flip each bin independently with probability ``noise_rate`` (at most 10%,
    the range covered by the sensitivity study)."""
    if not 0.0 <= noise_rate <= 0.1:
        raise ValidationError(f"noise_rate {noise_rate} outside the study range [0, 0.1]")
    flips = rng.random(data.trials.shape) < noise_rate
    return SpikeTrainSet(data.neuron_id, data.trials ^ flips, data.bin_width, data.t_grid)


# ---------------------------------------------------------------------------
# Named presets (defaults follow the simulation studies this package ships)
# ---------------------------------------------------------------------------

TWO_PI = 2.0 * np.pi


def preset(name: str) -> ScenarioSpec:
    """Scenario presets by name; see README for the catalogue."""
    cos_25 = RateSpec("cos", offset=0.25, amplitude=-0.1, frequency=TWO_PI)
    if name == "figure1-single":
        return ScenarioSpec(
            "single-neuron", 40, 100, seed=101,
            rates=[RateSpec("sin", offset=0.2, amplitude=0.15, frequency=3.0 * np.pi)],
        )
    if name == "scenario1":
        return ScenarioSpec(
            "independent-pair", 40, 100, seed=102,
            rates=[cos_25, RateSpec("linear", offset=0.15, amplitude=0.2)],
            zeta=1.0,
        )
    if name == "scenario2":
        return ScenarioSpec(
            "exact-sync-pair", 40, 100, seed=103, rates=[cos_25, cos_25], zeta=1.6
        )
    if name == "scenario3":
        sin_25 = RateSpec("sin", offset=0.25, amplitude=0.1, frequency=TWO_PI)
        return ScenarioSpec(
            "lagged-pair", 40, 100, seed=104, rates=[sin_25, sin_25],
            zeta=1.6, lag_dist={3: 0.2, 4: 0.5, 5: 0.3},
        )
    if name == "copula3":
        return ScenarioSpec(
            "copula-multi", 40, 100, seed=204, rates=[cos_25, cos_25, cos_25],
            beta=[0.66, 0.0, 0.0],
        )
    raise ValidationError(f"unknown preset {name!r}")


def power_rate() -> RateSpec:
    """Shared margin for the co-firing power study: 0.2 - 0.1 cos(12 pi t)."""
    return RateSpec("cos", offset=0.2, amplitude=-0.1, frequency=12.0 * np.pi)


def regression_rate() -> RateSpec:
    """First-neuron margin for the regression power study."""
    return RateSpec("cos", offset=0.25, amplitude=-0.1, frequency=12.0 * np.pi)


def sensitivity_rate() -> RateSpec:
    """Margin for the noise-sensitivity study: 0.4 + 0.1 cos(12 t)."""
    return RateSpec("cos", offset=0.4, amplitude=0.1, frequency=12.0)


# ---------------------------------------------------------------------------
# Replicate experiments
# ---------------------------------------------------------------------------


@dataclass
class PowerSpec:
    """Grid of (trial count, effect size) cells for a rejection-rate study."""

    design: str = "zeta"  # zeta | regression
    values: list[float] = field(default_factory=lambda: [1.0, 1.2, 1.4, 1.6])
    trial_counts: list[int] = field(default_factory=lambda: [20, 30, 40])
    rate: RateSpec = field(default_factory=power_rate)
    n_bins: int = 20
    t_max: float = 0.2
    b0: float = 0.2
    noise_rates: list[float] = field(default_factory=lambda: [0.0])
    replicates: int = 240
    seed: int = 0

    def __post_init__(self):
        if self.design not in ("zeta", "regression"):
            raise ValidationError(f"unknown power design {self.design!r}")
        if self.replicates < 1:
            raise ValidationError("replicates must be >= 1")

    def to_dict(self) -> dict:
        return {
            "design": self.design,
            "values": list(self.values),
            "trial_counts": list(self.trial_counts),
            "rate": self.rate.to_dict(),
            "n_bins": self.n_bins,
            "t_max": self.t_max,
            "b0": self.b0,
            "noise_rates": list(self.noise_rates),
            "replicates": self.replicates,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PowerSpec":
        kwargs = dict(d)
        if "rate" in kwargs:
            kwargs["rate"] = RateSpec.from_dict(kwargs["rate"])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ValidationError(f"malformed power spec: {exc}") from exc


@dataclass
class ExperimentRow:
    scenario: str
    n_trials: int
    value: float  # zeta or b1
    noise: float
    replicates: int
    rejection_rate: float


@dataclass
class ExperimentReport:
    rows: list[ExperimentRow]

    def rate(self, n_trials: int, value: float, noise: float = 0.0) -> float:
        for row in self.rows:
            if row.n_trials == n_trials and row.value == value and row.noise == noise:
                return row.rejection_rate
        raise KeyError((n_trials, value, noise))

    def to_csv(self, path) -> None:
        lines = ["scenario,R,zeta_or_b1,noise,replicates,rejection_rate"]
        for r in self.rows:
            lines.append(
                f"{r.scenario},{r.n_trials},{r.value},{r.noise},{r.replicates},{r.rejection_rate}"
            )
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def _replicate_seed(base_seed: int, cell: int, rep: int) -> tuple:
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(cell, rep))
    data_ss, fit_ss = ss.spawn(2)
    return data_ss, int(fit_ss.generate_state(1)[0])


def _power_replicate(spec: PowerSpec, cfg: SamplerConfig, n_trials: int, value: float,
                     noise: float, cell: int, rep: int) -> bool:
    data_ss, fit_seed = _replicate_seed(spec.seed, cell, rep)
    rng = np.random.default_rng(data_ss)
    if spec.design == "zeta":
        scen = ScenarioSpec(
            "exact-sync-pair" if value != 1.0 else "independent-pair",
            n_trials,
            spec.n_bins,
            seed=0,
            rates=[spec.rate, spec.rate],
            t_max=spec.t_max,
            zeta=value,
        )
        a, b = simulate_pair(scen, rng)
    else:
        a, b = simulate_regression_pair(
            spec.b0, value, spec.rate, n_trials, spec.n_bins, rng, spec.t_max
        )
    if noise > 0.0:
        a = sensitivity_noise(a, noise, rng)
        b = sensitivity_noise(b, noise, rng)
    res = pairwise.fit_pair(a, b, replace(cfg, seed=fit_seed))
    return res.significant


def power_experiment(spec: PowerSpec, cfg: SamplerConfig, n_jobs: int = 1) -> ExperimentReport:
    """Rejection rate of the synchrony decision over a replicate grid."""
    cells = [
        (r, v, nz)
        for r in spec.trial_counts
        for v in spec.values
        for nz in spec.noise_rates
    ]
    rows = []
    for cell_idx, (n_trials, value, noise) in enumerate(cells):
        flags = Parallel(n_jobs=n_jobs)(
            delayed(_power_replicate)(spec, cfg, n_trials, value, noise, cell_idx, rep)
            for rep in range(spec.replicates)
        )
        rows.append(
            ExperimentRow(
                scenario=spec.design,
                n_trials=n_trials,
                value=value,
                noise=noise,
                replicates=spec.replicates,
                rejection_rate=float(np.mean(flags)),
            )
        )
    return ExperimentReport(rows)


def sensitivity_spec(replicates: int = 240, seed: int = 0) -> PowerSpec:
    """The trial-noise sensitivity sweep: zeta = 1.2 margins with bin flips."""
    return PowerSpec(
        design="zeta",
        values=[1.2],
        trial_counts=[20, 30, 40, 50],
        rate=sensitivity_rate(),
        noise_rates=[0.0, 0.025, 0.05, 0.075, 0.1],
        replicates=replicates,
        seed=seed,
    )


def sensitivity_experiment(spec: PowerSpec, cfg: SamplerConfig, n_jobs: int = 1) -> ExperimentReport:
    """Alias driver for noise sweeps; identical mechanics to power_experiment."""
    return power_experiment(spec, cfg, n_jobs)
