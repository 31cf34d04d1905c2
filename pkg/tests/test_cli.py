"""Tests for the command-line interface."""

import json

import pytest
from click.testing import CliRunner

from compressed_bfl import __version__, cli as cli_module
from compressed_bfl.cli import cli
from compressed_bfl.samplers import DivergenceError


@pytest.fixture
def runner():
    return CliRunner()


class TestRun:
    def test_writes_results(self, runner, config_file, tmp_path):
        out = tmp_path / "run"
        result = runner.invoke(cli, ["-q", "run", str(config_file()), "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "accuracy=" in result.output
        assert "communication savings: 80.00%" in result.output
        assert (out / "trace.csv").is_file()
        assert (out / "summary.json").is_file()

    def test_seed_and_format_overrides(self, runner, config_file, tmp_path):
        out = tmp_path / "run"
        args = ["-q", "run", str(config_file()), "--out", str(out), "--seed", "5", "--format", "json"]
        result = runner.invoke(cli, args)
        assert result.exit_code == 0, result.output
        summary = json.loads((out / "summary.json").read_text())
        assert summary["provenance"]["seed"] == 5
        assert (out / "trace.json").is_file()

    def test_output_directory_from_config(self, runner, config_file, tmp_path):
        out = tmp_path / "configured"
        path = config_file(output={"directory": str(out)})
        result = runner.invoke(cli, ["-q", "run", str(path)])
        assert result.exit_code == 0, result.output
        assert (out / "config.toml").is_file()

    def test_unknown_key(self, runner, config_file):
        result = runner.invoke(cli, ["run", str(config_file(training={"momentum": 0.9}))])
        assert result.exit_code == 2
        assert "Configuration error" in result.output

    def test_missing_config(self, runner, tmp_path):
        result = runner.invoke(cli, ["run", str(tmp_path / "absent.toml")])
        assert result.exit_code == 2

    def test_classes_not_covered_by_label_skew(self, runner, config_file, tmp_path):
        path = config_file(
            network={"devices": 2}, partition={"mode": "label-skew", "classes_per_device": 1}
        )
        result = runner.invoke(cli, ["run", str(path), "--out", str(tmp_path / "run")])
        assert result.exit_code == 2
        assert "Configuration error" in result.output
        assert "cannot cover all 3 classes" in result.output

    def test_batch_larger_than_local_data(self, runner, config_file, tmp_path):
        path = config_file(training={"batch_size": 50})
        result = runner.invoke(cli, ["run", str(path), "--out", str(tmp_path / "run")])
        assert result.exit_code == 2
        assert "Configuration error" in result.output
        assert "Batch size 50" in result.output

    def test_divergence_exit_code(self, runner, config_file, tmp_path, monkeypatch):
        def diverge(config, out_dir):
            raise DivergenceError("non-finite parameters", round_index=6, device=2)

        monkeypatch.setattr(cli_module, "run_experiment", diverge)
        result = runner.invoke(cli, ["run", str(config_file()), "--out", str(tmp_path / "run")])
        assert result.exit_code == 3
        assert "round 7 on device 2" in result.output


class TestSweep:
    def test_one_directory_per_value(self, runner, config_file, tmp_path):
        out = tmp_path / "sweep"
        args = ["-q", "sweep", str(config_file()), "--param", "L=1,3", "--out", str(out)]
        result = runner.invoke(cli, args)
        assert result.exit_code == 0, result.output
        assert sorted(p.name for p in out.iterdir()) == ["L=1", "L=3"]
        config = (out / "L=3" / "config.toml").read_text()
        assert "local_steps = 3" in config

    def test_bad_param(self, runner, config_file):
        result = runner.invoke(cli, ["sweep", str(config_file()), "--param", "L"])
        assert result.exit_code == 2

    def test_bad_value(self, runner, config_file, tmp_path):
        args = ["sweep", str(config_file()), "--param", "zeta=0.5,2", "--out", str(tmp_path / "s")]
        result = runner.invoke(cli, args)
        assert result.exit_code == 2
        assert (tmp_path / "s" / "zeta=0.5" / "summary.json").is_file()


class TestReport:
    def test_table(self, runner, config_file, tmp_path):
        out = tmp_path / "sweep"
        runner.invoke(cli, ["-q", "sweep", str(config_file()), "--param", "algorithm=cd-bfl,dsgld", "--out", str(out)])
        result = runner.invoke(cli, ["-q", "report", str(out)])
        assert result.exit_code == 0, result.output
        lines = result.output.strip().splitlines()
        assert lines[0].split()[0] == "run"
        assert [line.split()[0] for line in lines[1:]] == ["algorithm=cd-bfl", "algorithm=dsgld"]

    def test_missing_directory(self, runner, tmp_path):
        result = runner.invoke(cli, ["report", str(tmp_path / "nothing")])
        assert result.exit_code == 4


def test_version(runner):
    result = runner.invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert __version__ in result.output
