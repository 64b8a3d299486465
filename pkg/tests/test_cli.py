import json

import numpy as np
import pytest
from click.testing import CliRunner

from spikesync import Ensemble, SpikeTrainSet, load_ensemble, save_ensemble
from spikesync.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def small_ensemble(n=2, r=6, t=10, seed=0):
    rng = np.random.default_rng(seed)
    neurons = [
        SpikeTrainSet(f"n{i}", (rng.random((r, t)) < 0.3).astype(int), 0.005)
        for i in range(n)
    ]
    return Ensemble(neurons)


def write_sampler_config(path, **kw):
    doc = {"sampler": {"n_iter": 120, "burn_in": 20, "seed": 1, "max_lag": 2, **kw}}
    path.write_text(json.dumps(doc))
    return path


class TestSimulateCommand:
    def test_scenario1_preset_writes_two_neuron_ensemble(self, runner, tmp_path):
        out = tmp_path / "run"
        result = runner.invoke(main, ["simulate", "--preset", "scenario1", "--out", str(out)])
        assert result.exit_code == 0, result.output
        ens = load_ensemble(out / "ensemble.json")
        assert ens.n_neurons == 2
        assert ens.neurons[0].trials.shape == (40, 100)
        assert (out / "config_used.json").exists()

    def test_same_seed_gives_identical_files(self, runner, tmp_path):
        for name in ("a", "b"):
            result = runner.invoke(
                main,
                ["simulate", "--preset", "scenario2", "--seed", "7", "--out", str(tmp_path / name)],
            )
            assert result.exit_code == 0
        assert (tmp_path / "a" / "ensemble.json").read_bytes() == (
            tmp_path / "b" / "ensemble.json"
        ).read_bytes()

    def test_bad_spec_exits_2_naming_field(self, runner, tmp_path):
        spec = tmp_path / "bad.json"
        spec.write_text(json.dumps({"kind": "exact-sync-pair", "n_trials": 10,
                                    "n_bins": 10, "seed": 1,
                                    "rates": [{"kind": "cos"}, {"kind": "cos"}],
                                    "zeta": "not-a-number"}))
        result = runner.invoke(main, ["simulate", "--spec", str(spec), "--out",
                                      str(tmp_path / "o")])
        assert result.exit_code == 2
        assert "error" in result.output

    def test_preset_and_spec_are_exclusive(self, runner, tmp_path):
        result = runner.invoke(main, ["simulate", "--out", str(tmp_path / "o")])
        assert result.exit_code == 2

    def test_csv_format(self, runner, tmp_path):
        out = tmp_path / "run"
        result = runner.invoke(main, ["simulate", "--preset", "scenario1",
                                      "--format", "csv", "--out", str(out)])
        assert result.exit_code == 0
        ens = load_ensemble(out / "ensemble_csv", format="csv")
        assert ens.n_neurons == 2


class TestFitPairCommand:
    def test_fit_pair_outputs(self, runner, tmp_path):
        data = tmp_path / "ens.json"
        save_ensemble(small_ensemble(), data)
        cfg = write_sampler_config(tmp_path / "cfg.json")
        out = tmp_path / "fit"
        result = runner.invoke(main, ["fit-pair", str(data), "--config", str(cfg),
                                      "--out", str(out)])
        assert result.exit_code == 0, result.output
        summary = json.loads((out / "summary.json").read_text())
        assert set(summary) == {"zeta_median", "zeta_ci95", "lag_posterior", "significant"}
        header = (out / "chain.csv").read_text().splitlines()[0]
        assert header.startswith("zeta,lag,log_lambda_a")
        assert (out / "config_used.json").exists()

    def test_seed_required(self, runner, tmp_path):
        data = tmp_path / "ens.json"
        save_ensemble(small_ensemble(), data)
        result = runner.invoke(main, ["fit-pair", str(data), "--out", str(tmp_path / "o")])
        assert result.exit_code == 2
        assert "seed" in result.output

    def test_wrong_neuron_count(self, runner, tmp_path):
        data = tmp_path / "ens3.json"
        save_ensemble(small_ensemble(n=3), data)
        result = runner.invoke(main, ["fit-pair", str(data), "--seed", "1",
                                      "--out", str(tmp_path / "o")])
        assert result.exit_code == 2

    def test_unknown_config_field(self, runner, tmp_path):
        data = tmp_path / "ens.json"
        save_ensemble(small_ensemble(), data)
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"sampler": {"seed": 1, "bogus_knob": 5}}))
        result = runner.invoke(main, ["fit-pair", str(data), "--config", str(cfg),
                                      "--out", str(tmp_path / "o")])
        assert result.exit_code == 2
        assert "bogus_knob" in result.output


class TestFitMultiCommand:
    def test_fit_multi_outputs(self, runner, tmp_path):
        data = tmp_path / "ens.json"
        save_ensemble(small_ensemble(n=3), data)
        cfg = write_sampler_config(tmp_path / "cfg.json", n_iter=60, burn_in=10)
        out = tmp_path / "fit"
        result = runner.invoke(main, ["fit-multi", str(data), "--config", str(cfg),
                                      "--out", str(out)])
        assert result.exit_code == 0, result.output
        pairs = json.loads((out / "pairs.json").read_text())
        assert len(pairs["pairs"]) == 3
        assert {"beta_median", "ci95", "significant"} <= set(pairs["pairs"][0])
        adjacency = json.loads((out / "adjacency.json").read_text())
        assert isinstance(adjacency, list)


class TestPowerCommand:
    def test_tiny_power_grid(self, runner, tmp_path):
        spec = tmp_path / "power.json"
        spec.write_text(json.dumps({
            "design": "zeta", "values": [1.0], "trial_counts": [5],
            "rate": {"kind": "const", "offset": 0.3}, "n_bins": 8,
            "replicates": 2, "seed": 3,
            "sampler": {"n_iter": 120, "burn_in": 20, "max_lag": 1, "seed": 3},
        }))
        out = tmp_path / "power"
        result = runner.invoke(main, ["power", "--spec", str(spec), "--threads", "1",
                                      "--out", str(out)])
        assert result.exit_code == 0, result.output
        lines = (out / "power.csv").read_text().strip().splitlines()
        assert lines[0] == "scenario,R,zeta_or_b1,noise,replicates,rejection_rate"
        assert len(lines) == 2


class TestPsthCommand:
    def test_psth_and_jpsth(self, runner, tmp_path):
        data = tmp_path / "ens.json"
        save_ensemble(small_ensemble(r=51, t=2000), data)
        out = tmp_path / "summ"
        result = runner.invoke(main, ["psth", str(data), "--out", str(out)])
        assert result.exit_code == 0, result.output
        lines = (out / "psth.csv").read_text().strip().splitlines()
        assert lines[0] == "t,n0,n1"
        assert len(lines) == 2001  # header + one row per bin
        j = np.loadtxt(out / "jpsth.csv", delimiter=",")
        assert j.shape == (2000, 2000)

    def test_single_neuron_no_jpsth(self, runner, tmp_path):
        data = tmp_path / "ens.json"
        save_ensemble(small_ensemble(n=1), data)
        out = tmp_path / "summ"
        result = runner.invoke(main, ["psth", str(data), "--out", str(out)])
        assert result.exit_code == 0
        assert (out / "psth.csv").exists()
        assert not (out / "jpsth.csv").exists()
