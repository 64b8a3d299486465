"""Binary spike-train containers, file ingestion, and empirical summaries.

Spike trains are stored per neuron as a trials x bins binary matrix. All
in-memory time grids are normalized to [0, 1] (bin centers); the physical
bin width in seconds is kept as metadata.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError

logger = logging.getLogger(__name__)

_GRID_TOL = 1e-9


def bin_centers(n_bins: int) -> np.ndarray:
    """Normalized bin-center grid on [0, 1] for ``n_bins`` bins."""
    return (np.arange(n_bins) + 0.5) / n_bins


def check_binary_matrix(trials, name: str = "trials") -> np.ndarray:
    """Validate and return a 2-D {0,1} matrix as uint8."""
    arr = np.asarray(trials)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-D (trials x bins), got ndim={arr.ndim}")
    if arr.shape[1] == 0:
        raise ValidationError(f"{name} has no time bins")
    if not np.isin(arr, (0, 1)).all():
        bad = arr[~np.isin(arr, (0, 1))].flat[0]
        raise ValidationError(f"{name} must contain only 0/1 entries, found {bad!r}")
    return arr.astype(np.uint8)


def _check_grid(t_grid, n_bins: int) -> np.ndarray:
    grid = np.asarray(t_grid, dtype=float)
    if grid.ndim != 1 or grid.size != n_bins:
        raise ValidationError(f"t_grid must have length {n_bins}, got shape {grid.shape}")
    if n_bins > 1:
        steps = np.diff(grid)
        if np.any(steps <= 0):
            raise ValidationError("t_grid must be strictly increasing")
        if np.ptp(steps) > _GRID_TOL * max(1.0, abs(steps[0])):
            raise ValidationError("t_grid must be uniformly spaced")
    return grid


@dataclass
class SpikeTrainSet:
    """Binary spike trains for one neuron: R trials over T uniform time bins."""

    neuron_id: str
    trials: np.ndarray  # (R, T) uint8, entries in {0, 1}
    bin_width: float  # seconds
    t_grid: np.ndarray = None  # (T,) bin centers; defaults to normalized [0, 1]

    def __post_init__(self):
        self.trials = check_binary_matrix(self.trials, f"trials[{self.neuron_id}]")
        if self.bin_width <= 0:
            raise ValidationError(f"bin_width must be positive, got {self.bin_width}")
        if self.t_grid is None:
            self.t_grid = bin_centers(self.n_bins)
        self.t_grid = _check_grid(self.t_grid, self.n_bins)

    @property
    def n_trials(self) -> int:
        return self.trials.shape[0]

    @property
    def n_bins(self) -> int:
        return self.trials.shape[1]


@dataclass
class Ensemble:
    """Simultaneously recorded neurons sharing trials, bins, and time grid."""

    neurons: list[SpikeTrainSet]
    condition_label: str | None = None

    def __post_init__(self):
        if not self.neurons:
            raise ValidationError("ensemble has no neurons")
        ref = self.neurons[0]
        for s in self.neurons[1:]:
            if s.trials.shape != ref.trials.shape:
                raise ValidationError(
                    f"neuron {s.neuron_id!r} has shape {s.trials.shape}, "
                    f"expected {ref.trials.shape}"
                )
            if abs(s.bin_width - ref.bin_width) > _GRID_TOL:
                raise ValidationError("neurons disagree on bin_width")
            if not np.array_equal(s.t_grid, ref.t_grid):
                raise ValidationError("neurons disagree on t_grid")

    @property
    def n_neurons(self) -> int:
        return len(self.neurons)

    @property
    def n_trials(self) -> int:
        return self.neurons[0].n_trials

    @property
    def n_bins(self) -> int:
        return self.neurons[0].n_bins

    @property
    def t_grid(self) -> np.ndarray:
        return self.neurons[0].t_grid

    @property
    def bin_width(self) -> float:
        return self.neurons[0].bin_width

    def __getitem__(self, i: int) -> SpikeTrainSet:
        return self.neurons[i]


@dataclass
class EventTimesRecord:
    """Raw spike timestamps (seconds) per trial, before binning."""

    trials: list[np.ndarray]
    trial_duration: float

    def __post_init__(self):
        if not self.trials:
            raise ValidationError("event record has no trials")
        if self.trial_duration <= 0:
            raise ValidationError("trial_duration must be positive")
        clean = []
        for k, times in enumerate(self.trials):
            t = np.asarray(times, dtype=float).ravel()
            if t.size and (t.min() < 0 or t.max() > self.trial_duration):
                raise ValidationError(f"trial {k} has timestamps outside [0, duration]")
            if np.any(np.diff(t) < 0):
                raise ValidationError(f"trial {k} timestamps are not nondecreasing")
            clean.append(t)
        self.trials = clean


def discretize(raw: EventTimesRecord, bin_width: float, neuron_id: str = "neuron") -> SpikeTrainSet:
    """Bin spike times into a binary matrix; bin t covers [(t-1)*w, t*w).

    A trailing partial bin is dropped. Multiple spikes falling in the same
    bin collapse to a single 1; the number of collapsed spikes is logged.
    """
    if bin_width <= 0:
        raise ValidationError(f"bin_width must be positive, got {bin_width}")
    n_bins = int(np.floor(raw.trial_duration / bin_width + _GRID_TOL))
    if n_bins < 1:
        raise ValidationError("trial_duration is shorter than one bin")

    mat = np.zeros((len(raw.trials), n_bins), dtype=np.uint8)
    n_collapsed = 0
    for r, times in enumerate(raw.trials):
        idx = np.floor(times / bin_width).astype(int)
        idx = idx[(idx >= 0) & (idx < n_bins)]
        counts = np.bincount(idx, minlength=n_bins)
        n_collapsed += int(counts[counts > 1].sum() - np.count_nonzero(counts > 1))
        mat[r] = counts > 0
    if n_collapsed:
        logger.warning("discretize: collapsed %d extra spikes into occupied bins", n_collapsed)
    return SpikeTrainSet(neuron_id, mat, bin_width)


def psth(data: SpikeTrainSet) -> np.ndarray:
    """Per-bin empirical firing frequency across trials."""
    if data.n_trials < 1:
        raise ValidationError("psth needs at least one trial")
    return data.trials.mean(axis=0)


def jpsth(a: SpikeTrainSet, b: SpikeTrainSet) -> np.ndarray:
    """Joint co-firing frequency matrix: entry (s, t) = mean_r a[r,s] * b[r,t]."""
    if a.trials.shape != b.trials.shape:
        raise ValidationError(
            f"shape mismatch: {a.trials.shape} vs {b.trials.shape}"
        )
    if a.n_trials < 1:
        raise ValidationError("jpsth needs at least one trial")
    af = a.trials.astype(float)
    bf = b.trials.astype(float)
    return af.T @ bf / a.n_trials


# ---------------------------------------------------------------------------
# File formats. Canonical: one JSON document
#   {"bin_width_s": w, "t_grid": [...], "condition": str|null,
#    "neurons": [{"id": str, "trials": [[0,1,...], ...]}, ...]}
# Alternative: a directory of flat CSV files (one per neuron, rows = trials)
# plus meta.json carrying ids, bin width, and the time grid.
# ---------------------------------------------------------------------------


def _ensemble_to_obj(ens: Ensemble) -> dict:
    return {
        "bin_width_s": float(ens.bin_width),
        "t_grid": [float(t) for t in ens.t_grid],
        "condition": ens.condition_label,
        "neurons": [
            {"id": s.neuron_id, "trials": s.trials.astype(int).tolist()} for s in ens.neurons
        ],
    }


def _ensemble_from_obj(obj: dict) -> Ensemble:
    try:
        bin_width = float(obj["bin_width_s"])
        t_grid = obj["t_grid"]
        raw_neurons = obj["neurons"]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed ensemble document: missing {exc}") from exc
    if not isinstance(raw_neurons, list) or not raw_neurons:
        raise ValidationError("ensemble document has no neurons")
    neurons = []
    for entry in raw_neurons:
        trials = entry.get("trials")
        if trials is None or not trials:
            raise ValidationError(f"neuron {entry.get('id')!r} has no trials")
        lengths = {len(row) for row in trials}
        if len(lengths) != 1:
            raise ValidationError(
                f"neuron {entry.get('id')!r} has trials of differing lengths {sorted(lengths)}"
            )
        neurons.append(
            SpikeTrainSet(str(entry.get("id", f"n{len(neurons)}")), np.asarray(trials),
                          bin_width, np.asarray(t_grid, dtype=float))
        )
    return Ensemble(neurons, condition_label=obj.get("condition"))


def save_ensemble(ens: Ensemble, path, format: str = "json") -> None:
    """Write an ensemble to ``path`` in the canonical JSON or flat-CSV format."""
    path = Path(path)
    if format == "json":
        path.write_text(json.dumps(_ensemble_to_obj(ens), indent=1) + "\n")
    elif format == "csv":
        path.mkdir(parents=True, exist_ok=True)
        meta = {
            "bin_width_s": float(ens.bin_width),
            "t_grid": [float(t) for t in ens.t_grid],
            "condition": ens.condition_label,
            "neuron_ids": [s.neuron_id for s in ens.neurons],
        }
        (path / "meta.json").write_text(json.dumps(meta, indent=1) + "\n")
        for i, s in enumerate(ens.neurons):
            with open(path / f"neuron_{i:03d}.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerows(s.trials.astype(int).tolist())
    else:
        raise ValidationError(f"unknown ensemble format {format!r}")


def load_ensemble(path, format: str = "json") -> Ensemble:
    """Read an ensemble written by :func:`save_ensemble`."""
    path = Path(path)
    if format == "json":
        try:
            obj = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
        return _ensemble_from_obj(obj)
    if format == "csv":
        meta_path = path / "meta.json"
        if not meta_path.exists():
            raise ValidationError(f"{path}: missing meta.json")
        meta = json.loads(meta_path.read_text())
        neurons = []
        for i, nid in enumerate(meta["neuron_ids"]):
            with open(path / f"neuron_{i:03d}.csv", newline="") as fh:
                rows = [[int(x) for x in row] for row in csv.reader(fh) if row]
            lengths = {len(row) for row in rows}
            if len(lengths) != 1:
                raise ValidationError(f"neuron {nid!r}: trials of differing lengths")
            neurons.append(
                SpikeTrainSet(str(nid), np.asarray(rows), float(meta["bin_width_s"]),
                              np.asarray(meta["t_grid"], dtype=float))
            )
        return Ensemble(neurons, condition_label=meta.get("condition"))
    raise ValidationError(f"unknown ensemble format {format!r}")


def as_ensemble(X, n_neurons: int | None = None, bin_width: float = 1.0) -> Ensemble:
    """Coerce estimator input to an :class:`Ensemble`.

    Accepts an Ensemble, a (n_neurons, R, T) array, or a sequence of (R, T)
    binary matrices.
    """
    if isinstance(X, Ensemble):
        ens = X
    elif isinstance(X, SpikeTrainSet):
        ens = Ensemble([X])
    else:
        arr = np.asarray(X) if not isinstance(X, (list, tuple)) else None
        if arr is not None and arr.ndim == 2:
            ens = Ensemble([SpikeTrainSet("n0", arr, bin_width)])
        elif arr is not None and arr.ndim == 3:
            ens = Ensemble(
                [SpikeTrainSet(f"n{i}", arr[i], bin_width) for i in range(arr.shape[0])]
            )
        elif isinstance(X, (list, tuple)):
            ens = Ensemble(
                [
                    x if isinstance(x, SpikeTrainSet) else SpikeTrainSet(f"n{i}", x, bin_width)
                    for i, x in enumerate(X)
                ]
            )
        else:
            raise ValidationError(f"cannot interpret {type(X).__name__} as an ensemble")
    if n_neurons is not None and ens.n_neurons != n_neurons:
        raise ValidationError(f"expected {n_neurons} neurons, got {ens.n_neurons}")
    return ens
