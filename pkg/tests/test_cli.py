import csv
import io
import json
import math
import subprocess
import sys

import pytest

from vmbsim.app.cli import EXIT_ABORT, EXIT_CONFIG, EXIT_IO, EXIT_OK, main
from vmbsim.app.config import SimConfig, save_config
from vmbsim.app.presets import PRESETS
from vmbsim.app.solver import Solver
from vmbsim.grid import write_snapshot

SMALL = {
    "grid": {"length": 2 * math.pi, "nx": 4, "vmax": 3.0, "nv": 6},
    "quad": {"polar": 2, "azimuth": 4},
    "collision": {"equilibrium": "none", "strength": 0.2},
    "initial": {"components": [{"density": 1.0, "temperature": 0.8, "density_amplitude": 0.1}],
                "fields": {"wave_amplitude": 0.01}},
    "dt": 0.05,
    "steps": 4,
    "output": {"plots": False, "cadence": 2},
}


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.json"
    save_config(SimConfig.from_dict(SMALL), path)
    return path


def test_preset_stdout(capsys):
    assert main(["preset", "weak_beam"]) == EXIT_OK
    cfg = SimConfig.from_json(capsys.readouterr().out)
    assert cfg == PRESETS["weak_beam"]()


def test_preset_relativistic_file(tmp_path):
    out = tmp_path / "p.json"
    assert main(["preset", "weak_beam", "--mode", "relativistic", "--out", str(out)]) == EXIT_OK
    cfg = SimConfig.from_json(out.read_text())
    assert cfg.transport.mode == "relativistic"
    assert cfg == PRESETS["weak_beam"](mode="relativistic")


def test_run_writes_report(small_config, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", str(small_config), "--steps", "2", "--out", str(out), "--no-plots"]) == EXIT_OK
    printed = json.loads(capsys.readouterr().out)
    assert printed["status"] == "ok"
    assert printed["steps"] == 2
    assert (out / "diagnostics.csv").exists()
    assert not list(out.glob("*.png"))
    assert json.loads((out / "config.json").read_text())["steps"] == 2


def test_run_with_plots(tmp_path):
    path = tmp_path / "plots.json"
    save_config(SimConfig.from_dict(SMALL).replace(**{"output.plots": True}), path)
    out = tmp_path / "run"
    assert main(["run", str(path), "--steps", "2", "--out", str(out)]) == EXIT_OK
    assert len(list(out.glob("*.png"))) >= 1


def test_run_abort_exit_code(tmp_path):
    data = json.loads(json.dumps(SMALL))
    data["collision"]["enabled"] = False
    data["initial"] = {"components": [{"density": 1.0, "velocity": [-2.2, 0, 0], "temperature": 0.1}],
                       "fields": {"B": [0.0, 0.0, 4.0]}}
    data["steps"] = 40
    path = tmp_path / "beam.json"
    path.write_text(json.dumps(data))
    assert main(["run", str(path), "--out", str(tmp_path / "o"), "--no-plots"]) == EXIT_ABORT


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"grid": {"nx": 0}}')
    assert main(["run", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    broken = tmp_path / "broken.json"
    broken.write_text("{oops")
    assert main(["run", str(broken), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_io_error(tmp_path):
    assert main(["run", str(tmp_path / "missing.json")]) == EXIT_IO


def test_check_collisions(small_config, capsys):
    assert main(["check", "collisions", str(small_config)]) == EXIT_OK
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0][:2] == ["cell", "pre_mass"]
    assert len(rows) == 5
    for row in rows[1:]:
        post = [float(x) for x in row[6:11]]
        assert max(abs(x) for x in post) <= 1e-12
        assert float(row[11]) >= 0.0


def test_relax(tmp_path, capsys):
    data = json.loads(json.dumps(SMALL))
    data["grid"]["nx"] = 1
    data["initial"] = {"components": [{"density": 0.5, "velocity": [1.0, 0, 0], "temperature": 0.5},
                                      {"density": 0.5, "velocity": [-1.0, 0, 0], "temperature": 0.5}]}
    data["dt"] = "auto"
    path = tmp_path / "homog.json"
    path.write_text(json.dumps(data))
    out = tmp_path / "relax"
    assert main(["relax", str(path), "--out", str(out), "--no-plots"]) == EXIT_OK
    summary = json.loads((out / "report.json").read_text())
    assert summary["monotone"] is True
    assert (out / "relax.csv").read_text().startswith("t,entropy,dissipation")


def test_relax_rejects_inhomogeneous(small_config, tmp_path):
    assert main(["relax", str(small_config), "--out", str(tmp_path / "r")]) == EXIT_CONFIG


def test_stability_float_and_snapshot(small_config, tmp_path, capsys):
    out = tmp_path / "stab"
    assert main(["stability", str(small_config), "1e-3", "--out", str(out), "--no-plots"]) == EXIT_OK
    assert json.loads((out / "report.json").read_text())["status"] == "ok"
    f0 = Solver(SimConfig.from_dict(SMALL)).initial_state().f
    snap = tmp_path / "other.bin"
    write_snapshot(snap, f0.with_values(f0.values * 1.001))
    assert main(["stability", str(small_config), str(snap), "--out", str(out), "--no-plots"]) == EXIT_OK
    d0 = json.loads((out / "report.json").read_text())["d0"]
    assert d0 == pytest.approx(1e-3 * f0.total_mass(), rel=1e-9)


def test_stability_json_and_bad_snapshot(small_config, tmp_path):
    pert = tmp_path / "pert.json"
    pert.write_text(json.dumps({"l1": 2e-3, "mode": 1}))
    out = tmp_path / "stab"
    assert main(["stability", str(small_config), str(pert), "--out", str(out), "--no-plots"]) == EXIT_OK
    other = tmp_path / "wrong.bin"
    data = json.loads(json.dumps(SMALL))
    data["grid"]["nx"] = 2
    write_snapshot(other, Solver(SimConfig.from_dict(data)).initial_state().f)
    assert main(["stability", str(small_config), str(other), "--out", str(out)]) == EXIT_CONFIG


def test_study_splitting(small_config, tmp_path, capsys):
    out = tmp_path / "split"
    code = main(["study-splitting", str(small_config), "--dt", "0.04", "0.02", "0.01",
                 "--out", str(out), "--no-plots"])
    assert code == EXIT_OK
    text = capsys.readouterr().out
    assert text.splitlines()[0] == "dt,error"
    assert "# slope=" in text
    assert (out / "splitting.csv").exists()


def test_study_splitting_needs_three_steps(small_config):
    assert main(["study-splitting", str(small_config), "--dt", "0.04", "0.02"]) == EXIT_CONFIG


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "vmbsim.app.cli", "preset", "relaxation"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert SimConfig.from_json(proc.stdout) == PRESETS["relaxation"]()


def test_bad_arguments():
    with pytest.raises(SystemExit):
        main(["preset", "nosuch"])
