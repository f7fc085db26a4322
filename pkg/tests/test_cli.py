"""
End-to-end tests of the rfmr command line.
"""
import json

import numpy as np
import pandas as pd
import pytest

import src.main
from src.errors import IntegrationError
from src.main import build_parser, main, resolve
from src.models import SimulateConfig


def read_json(path):
    return json.loads(path.read_text(encoding="utf-8"))


class TestSimulate:
    """simulate: trajectory export and input validation."""

    def test_fig2_trajectory(self, tmp_path, capsys):
        """Test the two-site preset writes t, x1, x2 every 0.01 up to t = 10."""
        assert main(["simulate", "--preset", "fig2", "--out-dir", str(tmp_path)]) == 0
        frame = pd.read_csv(tmp_path / "trajectory.csv")
        assert list(frame.columns) == ["t", "x1", "x2"]
        assert len(frame) == 1001
        assert (frame["x1"] + frame["x2"]).to_numpy() == pytest.approx(np.ones(1001), abs=1e-9)
        report = read_json(tmp_path / "simulate.json")
        assert report["command"] == "simulate"
        assert report["conservation_drift"] <= 2e-9
        assert capsys.readouterr().out.startswith("simulate n=2")

    def test_trajectory_json(self, tmp_path):
        """Test the JSON trajectory carries times, states, rates and config."""
        assert main(["simulate", "--preset", "fig2", "--tend", "1", "--out-dir", str(tmp_path)]) == 0
        payload = read_json(tmp_path / "trajectory.json")
        assert set(payload) == {"times", "states", "rates", "config"}
        assert len(payload["times"]) == len(payload["states"]) == 101
        assert payload["states"][0] == [1.0, 0.0]
        assert payload["config"]["t_end"] == 1.0
        frame = pd.read_csv(tmp_path / "trajectory.csv")
        assert np.array(payload["states"]) == pytest.approx(frame[["x1", "x2"]].to_numpy(), abs=1e-15)

    def test_missing_rates_is_usage_error(self, tmp_path):
        """Test missing parameters exit 2 without writing anything."""
        out = tmp_path / "out"
        assert main(["simulate", "--x0", "1,0", "--out-dir", str(out)]) == 2
        assert not out.exists()

    def test_state_outside_cube(self, tmp_path):
        """Test x0 outside [0, 1]^n exits 2."""
        out = tmp_path / "out"
        assert main(["simulate", "--rates", "1,1", "--x0", "1.5,0", "--out-dir", str(out)]) == 2
        assert not out.exists()

    def test_numerical_failure_writes_nothing(self, tmp_path, monkeypatch):
        """Test a failing integration exits 1 and leaves no partial files."""
        def failing(*args, **kwargs):
            raise IntegrationError("step size underflow")

        monkeypatch.setattr(src.main, "integrate", failing)
        out = tmp_path / "out"
        assert main(["simulate", "--preset", "fig2", "--out-dir", str(out)]) == 1
        assert not out.exists()

    def test_reruns_are_byte_identical(self, tmp_path):
        """Test identical parameters give identical files, wherever they are written."""
        first, second = tmp_path / "a", tmp_path / "b"
        argv = ["simulate", "--rates", "2,3,1", "--x0", "1,1,0", "--tend", "2"]
        assert main(argv + ["--out-dir", str(first)]) == 0
        assert main(argv + ["--out-dir", str(second)]) == 0
        for name in ("trajectory.csv", "trajectory.json", "simulate.json"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_rk4_method(self, tmp_path):
        """Test the fixed-step method is selectable."""
        argv = ["simulate", "--preset", "fig2", "--method", "rk4", "--step", "0.001",
                "--tend", "1", "--out-dir", str(tmp_path)]
        assert main(argv) == 0
        assert read_json(tmp_path / "simulate.json")["config"]["method"] == "rk4"


class TestConfigLayering:
    """Preset < config file < flags."""

    def test_config_file_with_flag_override(self, tmp_path):
        """Test flags win over the config file."""
        path = tmp_path / "run.json"
        path.write_text(json.dumps({
            "command": "simulate",
            "params": {"rates": [2.0, 1.0], "x0": [1.0, 0.0], "tend": 2.0},
        }))
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(path), "--tend", "1", "--out-dir", str(out)]) == 0
        assert len(pd.read_csv(out / "trajectory.csv")) == 101
        assert read_json(out / "simulate.json")["config"]["tend"] == 1.0

    def test_flat_config_file(self, tmp_path):
        """Test a config file holding the parameters directly."""
        path = tmp_path / "flat.json"
        path.write_text(json.dumps({"rates": [1.0, 1.0], "x0": [0.5, 0.5], "tend": 1.0}))
        args = build_parser().parse_args(["simulate", "--config", str(path)])
        command, config = resolve(args)
        assert command == "simulate"
        assert isinstance(config, SimulateConfig)
        assert config.tend == 1.0

    def test_preset_command_mismatch(self, tmp_path):
        """Test a preset cannot be run under another command."""
        assert main(["equilibrium", "--preset", "fig6", "--out-dir", str(tmp_path / "o")]) == 2

    def test_dimension_flag_must_match(self, tmp_path):
        """Test --n must agree with the vector lengths."""
        argv = ["simulate", "--n", "3", "--rates", "1,1", "--x0", "0,1", "--out-dir", str(tmp_path / "o")]
        assert main(argv) == 2


class TestEquilibrium:
    """equilibrium: single levels and sweeps."""

    def test_fig3_level(self, tmp_path):
        """Test the three-site equilibrium on level 2."""
        assert main(["equilibrium", "--rates", "2,3,1", "--s", "2", "--out-dir", str(tmp_path)]) == 0
        point = read_json(tmp_path / "equilibrium.json")["equilibrium"]
        assert point["e"] == pytest.approx([0.5380, 0.6528, 0.8091], abs=1e-3)
        assert sum(point["e"]) == pytest.approx(2.0, abs=1e-10)

    def test_empty_level(self, tmp_path):
        """Test s = 0 gives the zero state."""
        assert main(["equilibrium", "--rates", "2,3,1", "--s", "0", "--out-dir", str(tmp_path)]) == 0
        point = read_json(tmp_path / "equilibrium.json")["equilibrium"]
        assert point["e"] == [0.0, 0.0, 0.0]
        assert point["r"] == 0.0

    def test_sweep(self, tmp_path):
        """Test the sweep is monotone in s and written as CSV."""
        assert main(["equilibrium", "--rates", "2,3,1", "--sweep-s", "101", "--out-dir", str(tmp_path)]) == 0
        frame = pd.read_csv(tmp_path / "equilibrium_sweep.csv")
        assert list(frame.columns) == ["s", "e1", "e2", "e3", "r"]
        assert len(frame) == 101
        assert np.all(np.diff(frame[["e1", "e2", "e3"]].to_numpy(), axis=0) >= 0)

    def test_level_above_n(self, tmp_path):
        """Test s > n is rejected."""
        assert main(["equilibrium", "--rates", "1,1", "--s", "3", "--out-dir", str(tmp_path / "o")]) == 2


class TestPresets:
    """Worked-example presets through the command line."""

    def test_consensus_preset(self, tmp_path):
        """Test the four-site consensus example."""
        assert main(["--preset", "fig6", "--out-dir", str(tmp_path)]) == 0
        report = read_json(tmp_path / "consensus.json")["report"]
        assert report["consensus_error"] <= 1e-6
        assert report["steady_flow"] == pytest.approx(0.1875)
        assert "lyapunov_trace" not in report
        for name in ("trajectory.csv", "lyapunov.csv", "rate_line.csv"):
            assert (tmp_path / name).exists()

    def test_formation_preset(self, tmp_path):
        """Test the circular formation example balances."""
        assert main(["--preset", "fig7", "--out-dir", str(tmp_path)]) == 0
        verdict = read_json(tmp_path / "formation.json")["verdict"]
        assert verdict["balanced"]
        assert verdict["order_preserved"]
        assert list(pd.read_csv(tmp_path / "positions.csv").columns)[:3] == ["t", "px1", "py1"]

    def test_example5_limit(self, tmp_path):
        """Test the two-site periodic example matches its closed-form limit."""
        assert main(["--preset", "example5", "--out-dir", str(tmp_path)]) == 0
        report = read_json(tmp_path / "entrain.json")
        assert report["verdict"]["converged"]
        assert report["analytic_limit_error"] <= 1e-6
        assert len(pd.read_csv(tmp_path / "limit_cycle.csv")) == 64

    def test_fig5_entrains(self, tmp_path):
        """Test the three-site periodic example entrains."""
        assert main(["--preset", "fig5", "--out-dir", str(tmp_path)]) == 0
        assert read_json(tmp_path / "entrain.json")["verdict"]["converged"]


class TestAsep:
    """asep: Monte Carlo runs."""

    def test_zero_particles(self, tmp_path):
        """Test an empty lattice has zero density and flux."""
        argv = ["asep", "--n", "10", "--particles", "0", "--sweeps", "10", "--burn-in", "1",
                "--out-dir", str(tmp_path)]
        assert main(argv) == 0
        assert pd.read_csv(tmp_path / "profile.csv")["density"].tolist() == [0.0] * 10
        result = read_json(tmp_path / "asep.json")["result"]
        assert result["flux_estimate"] == 0.0

    def test_sweep_and_replicas(self, tmp_path):
        """Test the fundamental diagram and replica ensemble outputs."""
        argv = ["asep", "--n", "20", "--particles", "10", "--sweeps", "50", "--burn-in", "5",
                "--density-sweep", "3", "--replicas", "4", "--out-dir", str(tmp_path)]
        assert main(argv) == 0
        diagram = pd.read_csv(tmp_path / "fundamental_diagram.csv")
        assert diagram["density"].tolist() == pytest.approx([0.25, 0.5, 0.75])
        assert read_json(tmp_path / "asep.json")["ensemble"]["replicas"] == 4

    def test_too_many_particles(self, tmp_path):
        """Test more particles than sites is a usage error."""
        assert main(["asep", "--n", "4", "--particles", "5", "--out-dir", str(tmp_path / "o")]) == 2


def test_metrics_file(tmp_path):
    """Test the Prometheus text file is written on request."""
    metrics = tmp_path / "metrics.prom"
    argv = ["equilibrium", "--rates", "1,2", "--s", "1", "--out-dir", str(tmp_path),
            "--metrics-file", str(metrics)]
    assert main(argv) == 0
    text = metrics.read_text()
    assert "rfmr_command_duration_seconds" in text
    assert "rfmr_newton_iterations" in text


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
