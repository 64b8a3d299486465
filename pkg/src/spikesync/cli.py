"""Command-line front end.

Every command is a pure function of its input files, config, and seed;
the resolved configuration is echoed into the output directory so a run
can always be reproduced. Exit codes: 0 success, 2 validation error,
3 numerical failure.
"""

from __future__ import annotations

import dataclasses
import functools
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import copula, pairwise
from .data import jpsth, load_ensemble, psth, save_ensemble
from .errors import NumericalError, ValidationError
from .samplers import SamplerConfig
from .simulate import (
    PowerSpec,
    ScenarioSpec,
    power_experiment,
    preset as scenario_preset,
    sensitivity_spec,
    simulate as run_scenario,
)

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib


def _load_config(path: Path) -> dict:
    if path.suffix == ".toml":
        try:
            with open(path, "rb") as fh:
                return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ValidationError(f"{path}: invalid TOML ({exc})") from exc
    if path.suffix == ".json":
        try:
            return json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    raise ValidationError(f"{path}: config must be .toml or .json")


_SAMPLER_FIELDS = {f.name for f in dataclasses.fields(SamplerConfig)}


def _sampler_config(doc: dict, seed: int | None) -> SamplerConfig:
    block = doc.get("sampler", doc)
    unknown = set(block) - _SAMPLER_FIELDS
    if unknown:
        raise ValidationError(f"unknown sampler config field(s): {sorted(unknown)}")
    merged = dict(block)
    if seed is not None:
        merged["seed"] = seed
    if "seed" not in merged:
        raise ValidationError("a seed is required (config [sampler].seed or --seed)")
    return SamplerConfig(**merged)


def _echo_config(out_dir: Path, doc: dict) -> None:
    (out_dir / "config_used.json").write_text(json.dumps(doc, indent=1, default=str) + "\n")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1) + "\n")


def _cli_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValidationError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except NumericalError as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            sys.exit(3)

    return wrapper


def _out_dir(out: str) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


@click.group()
def main():
    """Bayesian synchrony detection for binary spike trains."""


@main.command("simulate")
@click.option("--preset", default=None, help="Named scenario preset.")
@click.option("--spec", "spec_path", type=click.Path(exists=True, path_type=Path), default=None,
              help="Scenario spec file (.toml or .json).")
@click.option("--seed", type=int, default=None, help="Override the spec seed.")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json")
@click.option("--out", required=True, help="Output directory.")
@_cli_errors
def cmd_simulate(preset, spec_path, seed, fmt, out):
    """Generate an ensemble from a scenario spec or preset."""
    if (preset is None) == (spec_path is None):
        raise ValidationError("provide exactly one of --preset or --spec")
    spec = sim.preset(preset) if preset else sim.ScenarioSpec.from_dict(_load_config(spec_path))
    if seed is not None:
        spec = dataclasses.replace(spec, seed=seed)
    ens = sim.simulate(spec)
    out_dir = _out_dir(out)
    target = out_dir / ("ensemble.json" if fmt == "json" else "ensemble_csv")
    save_ensemble(ens, target, format=fmt)
    _echo_config(out_dir, spec.to_dict())
    click.echo(f"wrote {target} ({ens.n_neurons} neurons, {ens.n_trials}x{ens.n_bins})")


@main.command("fit-pair")
@click.argument("data_path", type=click.Path(exists=True, path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", required=True)
@_cli_errors
def cmd_fit_pair(data_path, config_path, seed, out):
    """Fit the two-neuron synchrony model to a 2-neuron ensemble file."""
    doc = _load_config(config_path) if config_path else {}
    cfg = _sampler_config(doc, seed)
    ens = load_ensemble(data_path)
    if ens.n_neurons != 2:
        raise ValidationError(f"fit-pair needs a 2-neuron ensemble, got {ens.n_neurons}")
    res = pairwise.fit_pair(ens[0], ens[1], cfg)
    out_dir = _out_dir(out)
    _write_json(out_dir / "summary.json", res.summary_dict())
    res.chain.to_csv(out_dir / "chain.csv")
    _echo_config(out_dir, {"sampler": dataclasses.asdict(cfg), "data": str(data_path)})
    click.echo(
        f"zeta median {res.zeta_median:.3f}, 95% interval "
        f"[{res.zeta_interval[0]:.3f}, {res.zeta_interval[1]:.3f}], "
        f"significant={res.significant}"
    )


@main.command("fit-multi")
@click.argument("data_path", type=click.Path(exists=True, path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", required=True)
@_cli_errors
def cmd_fit_multi(data_path, config_path, seed, out):
    """Fit the n-neuron copula model to an ensemble file."""
    doc = _load_config(config_path) if config_path else {}
    cfg = _sampler_config(doc, seed)
    ens = load_ensemble(data_path)
    res = copula.fit_multi(ens, cfg)
    out_dir = _out_dir(out)
    _write_json(out_dir / "pairs.json", res.summary_dict())
    _write_json(out_dir / "adjacency.json", res.adjacency())
    res.chain.to_csv(out_dir / "chain.csv")
    _echo_config(out_dir, {"sampler": dataclasses.asdict(cfg), "data": str(data_path)})
    click.echo(
        f"{int(res.significant.sum())} of {len(res.pairs)} pairs significant, "
        f"HMC acceptance {res.chain.acceptance_rate:.2f}"
    )


def _experiment_command(spec_path, seed, threads, out, default_spec, csv_name):
    doc = _load_config(spec_path) if spec_path else {}
    sampler_doc = doc.pop("sampler", {})
    if spec_path:
        spec = sim.PowerSpec.from_dict(doc)
    else:
        spec = default_spec
    if seed is not None:
        spec = dataclasses.replace(spec, seed=seed)
    cfg = _sampler_config({"sampler": sampler_doc}, spec.seed)
    report = sim.power_experiment(spec, cfg, n_jobs=threads)
    out_dir = _out_dir(out)
    report.to_csv(out_dir / csv_name)
    _echo_config(out_dir, {"spec": spec.to_dict(), "sampler": dataclasses.asdict(cfg)})
    click.echo(f"wrote {out_dir / csv_name} ({len(report.rows)} grid cells)")


@main.command("power")
@click.option("--spec", "spec_path", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--threads", type=int, default=os.cpu_count())
@click.option("--out", required=True)
@_cli_errors
def cmd_power(spec_path, seed, threads, out):
    """Rejection-rate grid over effect sizes and trial counts."""
    _experiment_command(spec_path, seed, threads, out, sim.PowerSpec(), "power.csv")


@main.command("sensitivity")
@click.option("--spec", "spec_path", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--threads", type=int, default=os.cpu_count())
@click.option("--out", required=True)
@_cli_errors
def cmd_sensitivity(spec_path, seed, threads, out):
    """Power under bin-flip noise, over trial counts and noise rates."""
    _experiment_command(spec_path, seed, threads, out, sim.sensitivity_spec(), "sensitivity.csv")


@main.command("psth")
@click.argument("data_path", type=click.Path(exists=True, path_type=Path))
@click.option("--out", required=True)
@_cli_errors
def cmd_psth(data_path, out):
    """Empirical PSTH per neuron (and JPSTH when exactly two neurons)."""
    ens = load_ensemble(data_path)
    out_dir = _out_dir(out)
    cols = [ens.t_grid] + [psth(s) for s in ens.neurons]
    header = ",".join(["t"] + [s.neuron_id for s in ens.neurons])
    np.savetxt(out_dir / "psth.csv", np.column_stack(cols), delimiter=",",
               header=header, comments="")
    if ens.n_neurons == 2:
        np.savetxt(out_dir / "jpsth.csv", jpsth(ens[0], ens[1]), delimiter=",")
        click.echo(f"wrote psth.csv and jpsth.csv to {out_dir}")
    else:
        click.echo(f"wrote psth.csv to {out_dir}")


if __name__ == "__main__":
    main()
