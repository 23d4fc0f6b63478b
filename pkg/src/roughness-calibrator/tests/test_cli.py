"""Tests for the command-line surface."""

import pytest
import numpy as np
import orjson
from pathlib import Path
from click.testing import CliRunner

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from shared.utils import setup_logging
from config import settings
from main import EXIT_INPUT, cli, explicit_hessian_check
from network_model import load_measurements, load_network


DATA_DIR = Path(__file__).parent.parent / "data"


@pytest.fixture
def runner():
    yield CliRunner()
    # the cli group points log output at the runner's stderr
    setup_logging(level=settings.log_level)


class TestFactorConic:
    """Tests for the conic factorization command."""

    def test_intersecting_lines(self, runner):
        result = runner.invoke(cli, ["factor-conic", "2", "2.5", "2", "-0.5", "0.5", "-1"])

        assert result.exit_code == 0
        assert "real factorizable: True" in result.output
        assert "++-" in result.output
        assert "--+" in result.output

    def test_non_degenerate(self, runner):
        result = runner.invoke(cli, ["factor-conic", "1", "0", "1", "0", "0", "-1"])

        assert result.exit_code == 0
        assert "non-degenerate" in result.output

    def test_non_finite_coefficient(self, runner):
        result = runner.invoke(cli, ["factor-conic", "nan", "0", "1", "0", "0", "-1"])

        assert result.exit_code == EXIT_INPUT


class TestCalibrate:
    """Tests for the calibrate command."""

    def test_missing_network(self, runner, tmp_path):
        result = runner.invoke(cli, ["calibrate", "--network", str(tmp_path / "missing.net")])

        assert result.exit_code == EXIT_INPUT

    def test_writes_report(self, runner, tmp_path):
        report_path = tmp_path / "report.json"
        result = runner.invoke(cli, [
            "calibrate",
            "--method", "newton",
            "--launches", "1",
            "--inner-runs", "2",
            "--seed", "4",
            "--report", str(report_path),
            "--no-table",
        ])

        assert result.exit_code == 0, result.output
        report = orjson.loads(report_path.read_bytes())
        assert report["method"] == "newton"
        assert report["best_launch"] == 1
        assert len(report["launches"]) == 1
        assert report["launches"][0]["total_inner_runs"] == 2
        assert report["pipe_ids"] == [f"p{j}" for j in range(1, 9)]
        assert report["unmeasured_node_ids"] == ["1", "5"]
        assert report["reference"] is not None
        assert report["launches"][0]["residual_m3s"] < report["initial"]["residual_m3s"]


class TestSimulate:
    """Tests for the simulate command."""

    def test_random_sets(self, runner, tmp_path):
        out = tmp_path / "sets.csv"
        truth = tmp_path / "truth.json"
        result = runner.invoke(cli, [
            "simulate", "--random-sets", "2", "--seed", "0",
            "--out", str(out), "--truth-out", str(truth),
        ])

        assert result.exit_code == 0, result.output
        topo, _ = load_network(DATA_DIR / "threecycle.net")
        sets = load_measurements(out, topo)
        assert [ms.id for ms in sets] == [1, 2]
        assert truth.exists()

    def test_requires_one_demand_source(self, runner, tmp_path):
        result = runner.invoke(cli, ["simulate", "--out", str(tmp_path / "sets.csv")])

        assert result.exit_code == EXIT_INPUT
        assert "exactly one" in result.output

    def test_rejects_both_demand_sources(self, runner, tmp_path):
        demands = tmp_path / "demands.csv"
        demands.write_text("set,node,q_lps,h_s_m\n1,2,1.0,\n")
        result = runner.invoke(cli, [
            "simulate", "--random-sets", "1", "--demands-file", str(demands),
            "--out", str(tmp_path / "sets.csv"),
        ])

        assert result.exit_code == EXIT_INPUT

    def test_demands_file(self, runner, tmp_path):
        demands = tmp_path / "demands.csv"
        demands.write_text(
            "set,node,q_lps,h_s_m\n"
            "7,1,0.5,\n7,2,0.9,\n7,3,1.5,\n7,4,1.0,\n7,5,0.8,\n7,R,,100.0\n"
        )
        out = tmp_path / "sets.csv"
        result = runner.invoke(cli, ["simulate", "--demands-file", str(demands), "--out", str(out)])

        assert result.exit_code == 0, result.output
        topo, _ = load_network(DATA_DIR / "threecycle.net")
        sets = load_measurements(out, topo)
        assert [ms.id for ms in sets] == [7]
        np.testing.assert_allclose(sets[0].h_s, [100.0])


class TestCheck:
    """Tests for the diagnostics command."""

    def test_initial_state(self, runner, tmp_path):
        report_path = tmp_path / "check.json"
        result = runner.invoke(cli, ["check", "--report", str(report_path)])

        assert result.exit_code == 0, result.output
        doc = orjson.loads(report_path.read_bytes())
        assert doc["unknowns"] == 14
        assert doc["jacobian_rank"] == 14
        assert doc["tensor_residual_at_zero_error"] < 1e-10
        assert doc["tensor_jacobian_at_zero_error"] < 1e-10
        assert all(err < 1e-4 for err in doc["fd_relative_error"].values())
        assert len(doc["separators_inadmissible"]) <= doc["separators_total"]
        assert all(pipe.startswith("p") for _, pipe in doc["separators_inadmissible"])

    def test_explicit_hessians(self):
        check = explicit_hessian_check(seed=0)

        assert check["relative_error"] < 1e-4
        assert check["unknowns"] > 0
