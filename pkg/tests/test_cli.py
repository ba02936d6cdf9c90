import numpy as np
import pytest
import yaml

from eitstore.cli import cli_main
from eitstore.io import read_timeseries
from eitstore.scenarios import preset_names


@pytest.mark.parametrize("name", preset_names())
def test_validate_presets(name, capsys):
    assert cli_main(["validate", name]) == 0
    assert "scenario:" in capsys.readouterr().out


def test_unknown_subcommand(capsys):
    assert cli_main(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err


def test_config_errors_exit_one(tmp_path, capsys):
    assert cli_main(["validate", "no-such-thing"]) == 1
    f = tmp_path / "c.yaml"
    f.write_text("scenario:\n  physics:\n    detuning: 1\n")
    assert cli_main(["validate", str(f)]) == 1
    assert "unknown key" in capsys.readouterr().err
    assert cli_main(["validate", "eit-desk", "--set", "grid.dt_s=5e-11"]) == 1


def test_numerical_failure_exits_two(tmp_path, capsys):
    code = cli_main(["run", "eit-desk", "--out", str(tmp_path), "--set", "grid.integrator=euler",
                     "--set", "physics.detuning_hz=20e9"])
    assert code == 2
    assert "numerical failure" in capsys.readouterr().err


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert cli_main(["run", "eit-desk", "--out", str(out)]) == 0
    return out


def test_run_writes_manifest_outputs(run_dir):
    manifest = yaml.safe_load((run_dir / "manifest.yaml").read_text())
    assert manifest["outputs"]
    for name in manifest["outputs"]:
        assert (run_dir / name).is_file()
    summary = yaml.safe_load((run_dir / "summary.yaml").read_text())
    assert summary["trace_error"] < 1e-6


def test_rerun_from_manifest_is_bit_identical(run_dir, tmp_path):
    again = tmp_path / "again"
    assert cli_main(["run", str(run_dir / "manifest.yaml"), "--out", str(again)]) == 0
    for name in ("phase.csv", "exit_fields.csv", "ensemble.csv"):
        assert (again / name).read_bytes() == (run_dir / name).read_bytes()


def test_analyze_reproduces_in_memory_pipeline(run_dir, tmp_path):
    out = tmp_path / "an"
    assert cli_main(["analyze", str(run_dir / "ensemble.csv"), "--out", str(out)]) == 0
    mine = read_timeseries(out / "phase.csv").columns
    theirs = read_timeseries(run_dir / "phase.csv").columns
    assert np.array_equal(mine["phi_eit"], theirs["phi_eit"], equal_nan=True)
    assert np.array_equal(mine["recovered_intensity"], theirs["recovered_intensity"])


def test_scan_and_compare_commands(tmp_path, capsys):
    assert cli_main(["scan-detuning", "--deltas", "0.2e9,1.7e9", "--out", str(tmp_path / "s"),
                     "--workers", "1"]) == 0
    table = read_timeseries(tmp_path / "s" / "phi_eit_scan.csv").columns
    assert set(table) == {"time_s", "phi_eit_0.2GHz", "phi_eit_1.7GHz"}
    assert cli_main(["compare-propagation", "--deltas", "0.2e9", "--out",
                     str(tmp_path / "c")]) == 0
    assert "RMS difference" in capsys.readouterr().out


def test_raman_command_records_scaling(tmp_path):
    assert cli_main(["raman", "--deltas", "10e9", "--out", str(tmp_path)]) == 0
    m = yaml.safe_load((tmp_path / "manifest.yaml").read_text())
    assert m["scenario"]["physics"]["atom_density_factor"] == 10.0
    assert m["scenario"]["physics"]["coupling_power_w"] == 0.2
    assert any("pulse shape" in n for n in m["notes"])
