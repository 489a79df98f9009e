import hashlib
import json
import math
import os
from pathlib import Path

import pytest

from cavqi import scenarios
from cavqi.config import config_from_dict, read_config_data
from cavqi.errors import IoError, ParaxialViolation
from cavqi.scenarios import CSV_COLUMNS, FAILURE_MARKER, ScenarioFailed, run_scenario, write_results

GOLDEN = Path(__file__).parent / "golden"
ALL = ["retrieval-vs-time", "g2-vs-time", "mode-sweep", "geometry-check"]


def small(scenario, trials=20000, **extra):
    data = read_config_data("paper-defaults")
    data.update(scenario=scenario, trialsPerPoint=trials, timePoints=[0, 400, 800], modeCounts=[2, 6, 12])
    data.update(extra)
    return config_from_dict(data)


@pytest.mark.parametrize("scenario", ALL)
def test_csv_header_and_golden_file(scenario, tmp_path):
    run_scenario(small(scenario), tmp_path)
    text = (tmp_path / "results.csv").read_text()
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS[scenario])
    golden = GOLDEN / f"{scenario}.csv"
    if os.environ.get("REGEN_GOLDEN"):
        golden.parent.mkdir(exist_ok=True)
        golden.write_text(text)
    assert text == golden.read_text()


def test_retrieval_header_exact(tmp_path):
    run_scenario(small("retrieval-vs-time", trials=100), tmp_path)
    with open(tmp_path / "results.csv") as fh:
        assert fh.readline() == "t_us,R_est,R_ci_low,R_ci_high,n_trials\n"


def test_rerun_is_byte_identical(tmp_path):
    cfg = small("g2-vs-time")
    run_scenario(cfg, tmp_path / "a")
    run_scenario(cfg, tmp_path / "b")
    for name in ("results.csv", "summary.json", "g2.svg", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_worker_count_does_not_change_output(tmp_path):
    cfg = small("retrieval-vs-time", trials=300_000)
    for w in (1, 3):
        run_scenario(cfg, tmp_path / str(w), workers=w)
    assert (tmp_path / "1" / "results.csv").read_bytes() == (tmp_path / "3" / "results.csv").read_bytes()


def test_g2_summary_keys(tmp_path):
    run_scenario(small("g2-vs-time"), tmp_path)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert "xi_se" in summary["fit"] and "residual_norm" in summary["fit"]
    assert summary["seed"] == 20190611
    assert len(summary["config_hash"]) == 64


@pytest.mark.parametrize("scenario", ALL)
def test_every_file_carries_seed_and_hash(scenario, tmp_path):
    cfg = small(scenario, trials=2000)
    manifest = run_scenario(cfg, tmp_path) and json.loads((tmp_path / "manifest.json").read_text())
    h = cfg.config_hash()
    for entry in manifest["files"]:
        path = tmp_path / entry["path"]
        content = path.read_text()
        assert str(cfg.master_seed) in content and h in content
        assert hashlib.sha256(path.read_bytes()).hexdigest() == entry["sha256"]
    assert manifest["seed"] == cfg.master_seed and manifest["config_hash"] == h


def test_geometry_check_summary(tmp_path):
    bundle = run_scenario(small("geometry-check"), tmp_path)
    assert bundle.summary["roundTripIdentity"] is True
    assert bundle.summary["maxRelativeSpread"] <= 1e-9
    assert len(bundle.rows) == 12


@pytest.mark.parametrize("scenario", ["retrieval-vs-time", "g2-vs-time", "mode-sweep"])
def test_single_trial_runs(scenario, tmp_path):
    bundle = run_scenario(small(scenario, trials=1), tmp_path)
    for row in bundle.rows:
        lo, hi = row[2], row[3]
        assert hi - lo > 0.3 or math.isinf(hi)
    assert (tmp_path / "results.csv").exists()


def test_failure_flushes_partial_results(tmp_path, monkeypatch):
    real = scenarios.run_batch
    calls = []

    def flaky(*args, **kwargs):
        calls.append(1)
        if len(calls) == 2:
            raise ParaxialViolation("injected failure")
        return real(*args, **kwargs)

    monkeypatch.setattr(scenarios, "run_batch", flaky)
    with pytest.raises(ScenarioFailed) as info:
        run_scenario(small("retrieval-vs-time", trials=1000), tmp_path)
    assert isinstance(info.value.cause, ParaxialViolation)
    assert (tmp_path / FAILURE_MARKER).exists()
    lines = (tmp_path / "results.csv").read_text().splitlines()
    assert len(lines) == 3  # header, one row, trailer
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["status"] == "failed" and "injected" in summary["error"]


def test_success_clears_stale_marker(tmp_path):
    (tmp_path / FAILURE_MARKER).write_text("old")
    run_scenario(small("geometry-check"), tmp_path)
    assert not (tmp_path / FAILURE_MARKER).exists()


def test_unwritable_destination(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    bundle = run_scenario(small("geometry-check"))
    with pytest.raises(IoError) as info:
        write_results(bundle, blocker / "sub")
    assert "file" in str(info.value)
