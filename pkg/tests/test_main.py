# tests/test_main.py

import os
from unittest.mock import patch

import pytest
import yaml

from bethe_transport.errors import NumericalAbort
from bethe_transport.main import run_mode


@pytest.fixture
def mock_env(tmp_path):
    env_vars = {
        "BETHE_TRANSPORT_OUTPUT_ROOT": str(tmp_path / "runs"),
        "BETHE_TRANSPORT_THREADS": "1",
    }
    with patch.dict(os.environ, env_vars, clear=True):
        yield env_vars


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "experiment.yaml"
    data = {
        "geometry": {"branching": 2, "depth": 3},
        "spectral": {"energies": [0.0], "etas": [0.1]},
        "sampling": {"field_count": 1},
    }
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


def test_default_output_location(mock_env, small_config, tmp_path):
    """Without --out the run lands under <output_root>/<mode>/<hash>."""
    assert run_mode("green-validate", config_path=small_config) == 0
    runs = list((tmp_path / "runs" / "green-validate").iterdir())
    assert len(runs) == 1
    assert (runs[0] / "manifest.yaml").exists()


def test_preset_then_file_then_flags(mock_env, small_config, tmp_path, capsys):
    out = tmp_path / "out"
    assert run_mode("green-validate", config_path=small_config, preset="oracle", seed=4, out=out, dry_run=True) == 0
    assert not out.exists()

    lines = capsys.readouterr().out.splitlines()
    start = lines.index("--- Dry Run Plan ---")
    stop = lines.index("--------------------", start)
    assert lines[start + 1] == f"Output Directory: {out}"
    plan = yaml.safe_load("\n".join(lines[start + 3 : stop]))
    # flags
    assert plan["seed"] == 4
    assert plan["mode"] == "green-validate"
    # file over preset
    assert plan["geometry"]["depth"] == 3
    assert plan["geometry"]["branching"] == 2
    assert plan["sampling"]["field_count"] == 1
    assert plan["spectral"]["energies"] == [0.0]
    assert plan["spectral"]["etas"] == [0.1]
    # preset where the file is silent
    assert plan["distribution"] == {"kind": "uniform", "width": 1.0}


def test_numeric_abort_exit_code(mock_env, small_config, tmp_path):
    """A non-finite value stops the run with status 3 and still writes the manifest."""
    out = tmp_path / "out"
    abort = NumericalAbort("non-finite Green value", {"vertex": 1})
    with patch("bethe_transport.processor.forward_sweep", side_effect=abort):
        status = run_mode("green-validate", config_path=small_config, out=out)
    assert status == 3
    manifest = yaml.safe_load((out / "manifest.yaml").read_text(encoding="utf-8"))
    assert manifest["exit_status"] == 3
    assert "NumericalAbort" in manifest["flags"]


def test_invalid_environment(small_config):
    with patch.dict(os.environ, {"BETHE_TRANSPORT_THREADS": "zero"}, clear=True):
        assert run_mode("green-validate", config_path=small_config) == 2
