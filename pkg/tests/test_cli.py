import json
import os
import shutil
import subprocess
import sys

import pytest

from cavqi.cli import main, read_points
from cavqi.config import read_config_data
from cavqi.errors import ParseError


def write_config(tmp_path, **changes):
    data = read_config_data("paper-defaults")
    data.update(timePoints=[0, 300, 600], modeCounts=[2, 4, 6], trialsPerPoint=20000)
    data.update(changes)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    return path


def test_run_writes_outputs(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--scenario", "g2-vs-time", "--out", str(out)]) == 0
    assert (out / "results.csv").read_text().startswith("t_us,g2_est,")
    assert "rows written" in capsys.readouterr().out


def test_seed_and_trials_overrides(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--seed", "42", "--trials", "500", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["seed"] == 42 and summary["trialsPerPoint"] == 500


def test_geometry_check(tmp_path, capsys):
    assert main(["geometry-check", "--config", str(write_config(tmp_path))]) == 0
    out = capsys.readouterr().out
    block = json.loads(out[out.index("{"):])
    assert block["maxRelativeSpread"] <= 1e-9 and len(block["perModePathLength"]) == 12


def test_validation_error_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path, physics={"eta_D": 1.2})
    assert main(["run", "--config", str(cfg)]) == 2
    assert "eta_D" in capsys.readouterr().err


def test_parse_error_exit_code(tmp_path):
    path = tmp_path / "empty.json"
    path.write_text("")
    assert main(["run", "--config", str(path)]) == 2


def test_runtime_error_exit_code(tmp_path):
    # a steep element list trips the paraxial check at run time
    steep = [
        {"kind": "FreeSpace", "length": 0.1},
        {"kind": "ThinLens", "focal_length": 0.001},
        {"kind": "FreeSpace", "length": 0.1},
    ]
    cfg = write_config(tmp_path, geometry={"elements": steep})
    assert main(["geometry-check", "--config", str(cfg)]) == 3
    assert main(["run", "--config", str(cfg), "--scenario", "geometry-check", "--out", str(tmp_path / "o")]) == 3
    assert (tmp_path / "o" / "FAILED").exists()


def test_fit_commands(tmp_path, capsys):
    cfg = write_config(tmp_path)
    for scenario, model, extra in [
        ("retrieval-vs-time", "decay", []),
        ("g2-vs-time", "g2", []),
        ("mode-sweep", "linear", []),
        ("mode-sweep", "linear", ["--column", "PSaS_est"]),
    ]:
        out = tmp_path / scenario
        main(["run", "--config", str(cfg), "--scenario", scenario, "--out", str(out)])
        capsys.readouterr()
        assert main(["fit", "--input", str(out / "results.csv"), "--model", model, *extra]) == 0
        result = json.loads(capsys.readouterr().out)
        assert result["converged"]


def test_fit_missing_column(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ParseError):
        read_points(path, "decay")
    assert main(["fit", "--input", str(path), "--model", "decay"]) == 2


def test_fit_missing_file(tmp_path):
    assert main(["fit", "--input", str(tmp_path / "none.csv"), "--model", "linear"]) == 3


def test_bad_arguments_exit_2():
    with pytest.raises(SystemExit) as info:
        main(["run"])
    assert info.value.code == 2


def test_console_script_honours_sim_threads(tmp_path):
    exe = shutil.which("sim")
    cmd = [exe] if exe else [sys.executable, "-m", "cavqi.cli"]
    cfg = write_config(tmp_path)
    outs = []
    for threads in ("1", "4"):
        out = tmp_path / f"t{threads}"
        env = dict(os.environ, SIM_THREADS=threads)
        proc = subprocess.run(
            cmd + ["run", "--config", str(cfg), "--trials", "300000", "--out", str(out)],
            env=env, capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        outs.append((out / "results.csv").read_bytes())
    assert outs[0] == outs[1]
