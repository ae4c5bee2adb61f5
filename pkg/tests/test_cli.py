# tests/test_cli.py

import json

import pytest
import yaml
from click.testing import CliRunner

from bethe_transport.main import cli

# --- Fixtures ---


@pytest.fixture
def runner():
    """Provides a Click CliRunner instance."""
    return CliRunner()


@pytest.fixture(autouse=True)
def isolated_cwd(tmp_path, monkeypatch):
    """Keep the default output root inside the test directory."""
    monkeypatch.chdir(tmp_path)


def write_config(tmp_path, data, name="experiment.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


@pytest.fixture
def small_green(tmp_path):
    return write_config(
        tmp_path,
        {
            "geometry": {"branching": 2, "depth": 3},
            "spectral": {"energies": [0.0], "etas": [0.1]},
            "sampling": {"field_count": 2},
        },
    )


# --- Commands ---


class TestCommands:
    """Command registration and the presets listing."""

    def test_modes_registered(self, runner):
        result = runner.invoke(cli, ["--help"])
        assert result.exit_code == 0
        for mode in ("green-validate", "pool-run", "phase-map", "dynamics-run", "hatp-run", "bounds-check", "theorem1-scan"):
            assert mode in result.output

    def test_presets(self, runner):
        result = runner.invoke(cli, ["presets"])
        assert result.exit_code == 0
        assert "Available presets:" in result.output
        assert "phase-strong (phase-map)" in result.output


class TestGreenValidate:
    """End-to-end runs of the oracle comparison."""

    def test_success(self, runner, small_green, tmp_path):
        out = tmp_path / "out"
        result = runner.invoke(cli, ["green-validate", "--config", str(small_green), "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert (out / "green_validate.csv").exists()
        assert (out / "bounds.json").exists()
        manifest = yaml.safe_load((out / "manifest.yaml").read_text(encoding="utf-8"))
        assert manifest["exit_status"] == 0
        assert manifest["mode"] == "green-validate"
        assert "green_validate.csv" in manifest["files"]

    def test_deterministic_tables(self, runner, small_green, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        runner.invoke(cli, ["green-validate", "--config", str(small_green), "--out", str(a)])
        runner.invoke(cli, ["green-validate", "--config", str(small_green), "--out", str(b), "--threads", "2"])
        assert (a / "green_validate.csv").read_bytes() == (b / "green_validate.csv").read_bytes()
        assert (a / "bounds.json").read_bytes() == (b / "bounds.json").read_bytes()

    def test_seed_flag_changes_fields(self, runner, small_green, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        runner.invoke(cli, ["green-validate", "--config", str(small_green), "--out", str(a)])
        runner.invoke(cli, ["green-validate", "--config", str(small_green), "--out", str(b), "--seed", "9"])
        assert (a / "green_validate.csv").read_bytes() != (b / "green_validate.csv").read_bytes()

    def test_negative_control_fails(self, runner, tmp_path):
        config = write_config(
            tmp_path,
            {
                "geometry": {"branching": 2, "depth": 3},
                "spectral": {"energies": [0.0], "etas": [0.1]},
                "sampling": {"field_count": 2},
                "checks": {"negative_control": True},
            },
        )
        result = runner.invoke(cli, ["green-validate", "--config", str(config), "--out", str(tmp_path / "out")])
        assert result.exit_code == 1

    def test_existing_output_needs_force(self, runner, small_green, tmp_path):
        out = tmp_path / "out"
        out.mkdir()
        (out / "old.csv").write_text("stale")
        result = runner.invoke(cli, ["green-validate", "--config", str(small_green), "--out", str(out)])
        assert result.exit_code == 2
        forced = runner.invoke(cli, ["green-validate", "--config", str(small_green), "--out", str(out), "--force"])
        assert forced.exit_code == 0

    def test_oracle_guard_is_a_config_problem(self, runner, tmp_path):
        config = write_config(tmp_path, {"geometry": {"branching": 2, "depth": 12}, "sampling": {"field_count": 1}})
        result = runner.invoke(cli, ["green-validate", "--config", str(config), "--out", str(tmp_path / "out")])
        assert result.exit_code == 2
        manifest = yaml.safe_load((tmp_path / "out" / "manifest.yaml").read_text(encoding="utf-8"))
        assert "OracleSizeError" in manifest["flags"]


class TestConfigProblems:
    """Invalid inputs exit with status 2 before any work."""

    def test_invalid_field(self, runner, tmp_path):
        config = write_config(tmp_path, {"geometry": {"branching": 1}})
        result = runner.invoke(cli, ["pool-run", "--config", str(config), "--out", str(tmp_path / "out")])
        assert result.exit_code == 2
        assert "geometry.branching" in result.output
        assert not (tmp_path / "out").exists()

    def test_missing_file(self, runner, tmp_path):
        result = runner.invoke(cli, ["pool-run", "--config", str(tmp_path / "nope.yaml")])
        assert result.exit_code == 2

    def test_unknown_preset(self, runner):
        result = runner.invoke(cli, ["phase-map", "--preset", "nope"])
        assert result.exit_code == 2

    def test_dry_run(self, runner, small_green, tmp_path):
        out = tmp_path / "planned"
        result = runner.invoke(cli, ["bounds-check", "--config", str(small_green), "--out", str(out), "--dry-run"])
        assert result.exit_code == 0
        assert "--- Dry Run Plan ---" in result.output
        assert "mode: bounds-check" in result.output
        assert not out.exists()


class TestOtherModes:
    """Small runs of the remaining modes."""

    def test_pool_run(self, runner, tmp_path):
        config = write_config(
            tmp_path,
            {
                "spectral": {"energies": [0.0], "etas": [0.1], "s_values": [1.0]},
                "pool": {"size": 200, "burn_in": 5, "window": 2, "root_samples": 500},
                "sampling": {"path_samples": 200},
            },
        )
        out = tmp_path / "out"
        result = runner.invoke(cli, ["pool-run", "--config", str(config), "--out", str(out)])
        assert result.exit_code == 0, result.output
        for name in ("pool_estimates.csv", "free_energy.csv", "pool_000.bin", "pool_000.json", "manifest.yaml"):
            assert (out / name).exists()
        quantities = {line.split(",")[0] for line in (out / "pool_estimates.csv").read_text().splitlines()[1:]}
        assert {"im_g_mean", "F", "H", "inverse_moment", "free_energy"} <= quantities

    def test_dynamics_run(self, runner, tmp_path):
        config = write_config(
            tmp_path,
            {
                "geometry": {"branching": 2, "depth": 8},
                "dynamics": {"t_grid": [0.0, 0.5, 1.0], "betas": [1.0]},
                "sampling": {"field_count": 1},
                "checks": {"enabled": ["ballistic_tail"]},
            },
        )
        out = tmp_path / "out"
        result = runner.invoke(cli, ["dynamics-run", "--config", str(config), "--out", str(out)])
        assert result.exit_code == 0, result.output
        for name in ("shell_profiles.csv", "moments.csv", "front_tails.csv", "ballistic_fit.csv"):
            assert (out / name).exists()

    def test_hatp_run(self, runner, tmp_path):
        config = write_config(
            tmp_path,
            {
                "geometry": {"branching": 2, "depth": 4},
                "spectral": {"etas": [0.5]},
                "dynamics": {"betas": [0.0]},
                "sampling": {"field_count": 1},
            },
        )
        out = tmp_path / "out"
        result = runner.invoke(cli, ["hatp-run", "--config", str(config), "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert (out / "hat_profiles.csv").exists()
        assert (out / "hat_summary.csv").exists()

    def test_hatp_run_reports_rage_trend(self, runner, tmp_path):
        config = write_config(
            tmp_path,
            {
                "geometry": {"branching": 2, "depth": 8},
                "distribution": {"kind": "uniform", "width": 0.5},
                "spectral": {"etas": [0.5, 0.25]},
                "dynamics": {"betas": [0.0]},
                "sampling": {"field_count": 2},
                "checks": {"enabled": ["rage_trend"]},
            },
        )
        out = tmp_path / "out"
        result = runner.invoke(cli, ["hatp-run", "--config", str(config), "--out", str(out)])
        assert result.exit_code == 0, result.output
        reports = json.loads((out / "bounds.json").read_text(encoding="utf-8"))["reports"]
        assert [r["bound_id"] for r in reports] == ["rage_trend"]
        assert reports[0]["verdict"] == "pass"

    def test_dynamics_run_checks_expected_regime(self, runner, tmp_path):
        config = write_config(
            tmp_path,
            {
                "geometry": {"branching": 2, "depth": 10},
                "distribution": {"kind": "uniform", "width": 0.5},
                "dynamics": {"t_grid": [0.0, 0.25, 0.5, 0.75, 1.0], "betas": [1.0], "expected_regime": "ballistic"},
                "sampling": {"field_count": 2},
                "checks": {"enabled": ["transport_regime"]},
            },
        )
        out = tmp_path / "out"
        result = runner.invoke(cli, ["dynamics-run", "--config", str(config), "--out", str(out)])
        assert result.exit_code == 0, result.output
        reports = json.loads((out / "bounds.json").read_text(encoding="utf-8"))["reports"]
        assert [r["bound_id"] for r in reports] == ["transport_regime"]
        assert reports[0]["verdict"] == "pass"
        assert reports[0]["flags"] == ["ballistic"]
