"""Tests for config loading, the experiment runner, and the CLI."""

import csv
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

from hiss.cli import (
    ConfigError,
    ExperimentConfig,
    ablation_experiment,
    build_model,
    enumerate_experiment,
    load_config,
    main,
    run_experiment,
)
from hiss.models import AntidiagonalIsingModel, TabularModel, TspModel


def tiny_config(tmp_path, **run_overrides):
    run = {
        "chains": 2,
        "samples": 50,
        "seed": 99,
        "out_dir": str(tmp_path / "out"),
        "metrics": ["tvd", "log_mae", "coverage", "acceptance"],
        "workers": 1,
    }
    run.update(run_overrides)
    return {
        "model": {"kind": "bernoulli4d"},
        "sampler": {
            "kind": "hiss",
            "step_size": 0.2,
            "eta": 4.0,
            "sweeps": 5,
            "refinements": 2,
        },
        "run": run,
    }


def write_config(tmp_path, data, name="config.yaml"):
    path = tmp_path / name
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(data, fh)
    return path


def silent(*args, **kwargs):
    pass


class TestLoadConfig:
    def test_valid_roundtrip(self, tmp_path):
        path = write_config(tmp_path, tiny_config(tmp_path))
        cfg = load_config(path)
        assert cfg.sampler_name == "hiss"
        assert cfg.sampler.eta == 4.0
        assert cfg.chains == 2
        assert cfg.metrics == ("tvd", "log_mae", "coverage", "acceptance")
        again = ExperimentConfig.from_dict(cfg.to_dict())
        assert again == cfg

    def test_bundled_benchmark_configs_all_load(self):
        root = Path(__file__).resolve().parents[1] / "configs"
        paths = sorted(root.glob("*.yaml"))
        assert len(paths) >= 10
        for path in paths:
            cfg = load_config(path)
            assert cfg.samples >= 1

    def test_unknown_key_rejected(self, tmp_path):
        data = tiny_config(tmp_path)
        data["sampler"]["temperature"] = 2.0
        with pytest.raises(ConfigError, match="temperature"):
            load_config(write_config(tmp_path, data))

    def test_missing_section(self, tmp_path):
        data = tiny_config(tmp_path)
        del data["run"]
        with pytest.raises(ConfigError, match="run"):
            load_config(write_config(tmp_path, data))

    def test_unknown_sampler(self, tmp_path):
        data = tiny_config(tmp_path)
        data["sampler"]["kind"] = "nuts"
        with pytest.raises(ConfigError, match="sampler.kind"):
            load_config(write_config(tmp_path, data))

    def test_pt_section_only_for_pt_sampler(self, tmp_path):
        data = tiny_config(tmp_path)
        data["sampler"]["pt"] = {"num_temps": 5}
        with pytest.raises(ConfigError, match="pt"):
            load_config(write_config(tmp_path, data))

    def test_pt_sampler_gets_defaults(self, tmp_path):
        data = tiny_config(tmp_path)
        data["sampler"]["kind"] = "pt_dmala"
        del data["sampler"]["eta"]
        cfg = load_config(write_config(tmp_path, data))
        assert cfg.pt is not None
        assert cfg.pt.num_temps == 5

    def test_exact_metrics_rejected_on_tsp(self, tmp_path):
        data = tiny_config(tmp_path)
        data["model"] = {"kind": "tsp", "instance": "eil14"}
        with pytest.raises(ConfigError, match="enumerable"):
            load_config(write_config(tmp_path, data))

    def test_tsp_needs_instance_or_path(self, tmp_path):
        data = tiny_config(tmp_path, metrics=["acceptance"])
        data["model"] = {"kind": "tsp"}
        with pytest.raises(ConfigError, match="instance"):
            load_config(write_config(tmp_path, data))

    def test_bad_sampler_value_surfaces_as_config_error(self, tmp_path):
        data = tiny_config(tmp_path)
        data["sampler"]["eta"] = -1.0
        with pytest.raises(ConfigError, match="sampler"):
            load_config(write_config(tmp_path, data))

    def test_nonpositive_counts_rejected(self, tmp_path):
        data = tiny_config(tmp_path, chains=0)
        with pytest.raises(ConfigError):
            load_config(write_config(tmp_path, data))

    def test_invalid_yaml(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("model: [unclosed\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="YAML"):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "nope.yaml")


class TestBuildModel:
    def test_kinds(self):
        assert isinstance(build_model({"kind": "bernoulli4d"}), TabularModel)
        ising = build_model({"kind": "ising", "side": 3, "coupling": 0.5, "field": 0.1})
        assert isinstance(ising, AntidiagonalIsingModel)
        tsp = build_model({"kind": "tsp", "instance": "eil14"})
        assert isinstance(tsp, TspModel)
        mlp = build_model({"kind": "binary_mlp", "hidden": 3, "data": {"kind": "synthetic", "num_points": 8}})
        assert mlp.domain.num_coordinates == 3 * 4 + 3

    def test_fresh_instances(self):
        a = build_model({"kind": "bernoulli4d"})
        b = build_model({"kind": "bernoulli4d"})
        assert a is not b
        a.energy(a.initial_state())
        assert a.energy_calls == 1
        assert b.energy_calls == 0


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("tiny")
    cfg = ExperimentConfig.from_dict(tiny_config(tmp_path))
    result = run_experiment(cfg, echo=silent)
    return cfg, result


class TestRunExperiment:

    def test_output_files_exist(self, tiny_run):
        _, result = tiny_run
        for name in ("metrics.csv", "final_samples.csv", "nfe.csv", "summary.csv", "timings.csv", "manifest.yaml"):
            assert (result.out_dir / name).is_file(), name

    def test_metrics_csv_schema(self, tiny_run):
        cfg, result = tiny_run
        with open(result.out_dir / "metrics.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["iteration", "wall_time_s", "metric", "value", "chain_id"]
        body = rows[1:]
        assert len(body) == cfg.chains * cfg.samples * len(cfg.metrics)
        for row in body[:8]:
            assert int(row[0]) >= 1
            float(row[1])
            assert row[2] in cfg.metrics
            float(row[3])
            assert int(row[4]) in range(cfg.chains)
        # wall_time_s is logical: energy calls / 1e6, so it is exactly
        # reproducible and strictly increasing within a chain
        chain0 = [float(r[1]) for r in body if r[4] == "0" and r[2] == "tvd"]
        assert all(b > a for a, b in zip(chain0, chain0[1:]))

    def test_summary_shapes(self, tiny_run):
        cfg, result = tiny_run
        agg = result.summary["aggregate"]
        for key in ("final_tvd_mean", "final_log_mae_mean", "final_coverage_mean",
                    "acceptance_mean", "energy_calls_mean"):
            assert key in agg
        assert 0.0 <= agg["final_tvd_mean"] <= 1.0
        assert result.summary["nfe"]["match"] is True
        assert result.summary["diversity"] is None
        assert len(result.summary["per_chain"]) == cfg.chains

    def test_manifest_roundtrips_as_config(self, tiny_run):
        cfg, result = tiny_run
        loaded = load_config(result.out_dir / "manifest.yaml")
        assert loaded == cfg

    def test_rerun_is_byte_identical(self, tiny_run, tmp_path):
        cfg, result = tiny_run
        from dataclasses import replace

        rerun = run_experiment(replace(cfg, out_dir=str(tmp_path / "again")), echo=silent)
        for name in ("metrics.csv", "final_samples.csv", "nfe.csv", "summary.csv"):
            a = (result.out_dir / name).read_bytes()
            b = (rerun.out_dir / name).read_bytes()
            assert a == b, f"{name} differs between identical runs"

    def test_workers_do_not_change_results(self, tiny_run, tmp_path):
        cfg, result = tiny_run
        from dataclasses import replace

        threaded = run_experiment(
            replace(cfg, out_dir=str(tmp_path / "threaded"), workers=2), echo=silent
        )
        a = (result.out_dir / "metrics.csv").read_bytes()
        b = (threaded.out_dir / "metrics.csv").read_bytes()
        assert a == b

    def test_acceptance_only_metrics_skip_enumeration(self, tmp_path):
        data = tiny_config(tmp_path, metrics=["acceptance"], chains=1, samples=10)
        cfg = ExperimentConfig.from_dict(data)
        result = run_experiment(cfg, echo=silent)
        assert result.exact is None
        assert "final_acceptance" in result.summary["per_chain"][0]

    def test_tsp_run_reports_costs_and_diversity(self, tmp_path):
        data = tiny_config(tmp_path, metrics=["acceptance"], chains=2, samples=20)
        data["model"] = {"kind": "tsp", "instance": "eil14"}
        data["sampler"]["sweeps"] = 2
        cfg = ExperimentConfig.from_dict(data)
        result = run_experiment(cfg, echo=silent)
        agg = result.summary["aggregate"]
        assert "best_cost_mean" in agg
        assert agg["best_cost_mean"] > 0
        assert result.summary["diversity"] is not None
        assert result.summary["diversity"]["unique"] >= 1


class TestEnumerate:
    def test_bernoulli_csv(self, tmp_path):
        cfg = ExperimentConfig.from_dict(tiny_config(tmp_path))
        path = enumerate_experiment(cfg, echo=silent)
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["state", "probability"]
        assert len(rows) == 1 + 16
        assert rows[1] == ["0000", "0.5881901975288248"]
        assert rows[2][0] == "1110"
        assert rows[3][0] == "1111"
        probs = [float(r[1]) for r in rows[1:]]
        assert probs == sorted(probs, reverse=True)
        assert sum(probs) == pytest.approx(1.0)

    def test_ising_csv_has_512_states(self, tmp_path):
        data = tiny_config(tmp_path)
        data["model"] = {"kind": "ising", "side": 3, "coupling": 0.5, "field": 0.1}
        cfg = ExperimentConfig.from_dict(data)
        path = enumerate_experiment(cfg, echo=silent)
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 1 + 512
        # the mode is every spin up: label is all level-1 digits
        assert rows[1][0] == "1" * 9

    def test_tsp_not_enumerable(self, tmp_path):
        data = tiny_config(tmp_path, metrics=["acceptance"])
        data["model"] = {"kind": "tsp", "instance": "eil14"}
        cfg = ExperimentConfig.from_dict(data)
        with pytest.raises(ConfigError, match="enumerate"):
            enumerate_experiment(cfg, echo=silent)


class TestAblation:
    def test_two_point_eta_sweep(self, tmp_path):
        data = tiny_config(tmp_path, chains=1, samples=30)
        cfg = ExperimentConfig.from_dict(data)
        rows = ablation_experiment(cfg, "eta", ["0.01", "4.0"], echo=silent)
        assert [row["value"] for row in rows] == [0.01, 4.0]
        # tiny eta proposes the current state back, so everything is accepted
        assert rows[0]["acceptance_mean"] == pytest.approx(1.0)
        assert rows[1]["acceptance_mean"] < 1.0
        table = Path(cfg.out_dir) / "ablation_summary.csv"
        assert table.is_file()
        with open(table, newline="", encoding="utf-8") as fh:
            got = list(csv.reader(fh))
        assert got[0][0] == "param"
        assert len(got) == 3

    def test_unknown_param(self, tmp_path):
        cfg = ExperimentConfig.from_dict(tiny_config(tmp_path))
        with pytest.raises(ConfigError, match="parameter"):
            ablation_experiment(cfg, "temperature", [1.0], echo=silent)

    def test_bad_grid_value(self, tmp_path):
        cfg = ExperimentConfig.from_dict(tiny_config(tmp_path))
        with pytest.raises(ConfigError, match="grid"):
            ablation_experiment(cfg, "eta", ["fast"], echo=silent)

    def test_needs_exact_metrics(self, tmp_path):
        data = tiny_config(tmp_path, metrics=["acceptance"])
        cfg = ExperimentConfig.from_dict(data)
        with pytest.raises(ConfigError, match="metrics"):
            ablation_experiment(cfg, "eta", [1.0], echo=silent)


class TestMain:
    def test_run_exit_code_and_overrides(self, tmp_path, capsys):
        data = tiny_config(tmp_path, chains=1, samples=10)
        path = write_config(tmp_path, data)
        override = tmp_path / "elsewhere"
        code = main(["run", str(path), "--out-dir", str(override), "--seed", "7"])
        assert code == 0
        assert (override / "metrics.csv").is_file()
        manifest = load_config(override / "manifest.yaml")
        assert manifest.seed == 7
        assert "outputs in" in capsys.readouterr().out

    def test_config_error_exit_code(self, tmp_path, capsys):
        data = tiny_config(tmp_path)
        data["sampler"]["kind"] = "nuts"
        path = write_config(tmp_path, data)
        assert main(["run", str(path)]) == 2
        assert "error:" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["run", str(tmp_path / "absent.yaml")]) == 2
        capsys.readouterr()

    def test_enumerate_subcommand(self, tmp_path, capsys):
        path = write_config(tmp_path, tiny_config(tmp_path))
        assert main(["enumerate", str(path)]) == 0
        capsys.readouterr()

    def test_ablation_empty_grid(self, tmp_path, capsys):
        path = write_config(tmp_path, tiny_config(tmp_path))
        assert main(["ablation", str(path), "--param", "eta", "--grid", ","]) == 2
        capsys.readouterr()

    def test_module_entry_point_version(self):
        proc = subprocess.run(
            [sys.executable, "-m", "hiss", "--version"],
            capture_output=True,
            text=True,
            check=True,
        )
        assert proc.stdout.strip()
