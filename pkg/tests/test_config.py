import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cavqi.config import (
    ExperimentConfig,
    bundled_config_path,
    config_from_dict,
    dump_config,
    load_config,
    read_config_data,
)
from cavqi.errors import IoError, ParseError, ValidationError
from cavqi.mode_array import ThinLens


def base(**changes):
    data = {"scenario": "g2-vs-time", "masterSeed": 7}
    data.update(changes)
    return data


def test_bundled_defaults():
    cfg = load_config(bundled_config_path())
    p = cfg.physics
    assert (p.chi, p.R0, p.tau0, p.F, p.xi_se, p.Z) == (0.0179, 0.70, 600.0, 16.0, 0.3, 0.002)
    assert (p.eta_esp, p.eta_t, p.eta_D, p.eta_S, p.m) == (0.60, 0.34, 0.68, 0.14, 6)
    assert cfg.time_points == tuple(float(t) for t in range(0, 900, 100))
    assert cfg.mode_counts == (2, 4, 6, 8, 10, 12)
    assert load_config("paper-defaults") == cfg


def test_empty_file_is_parse_error(tmp_path):
    path = tmp_path / "empty.json"
    path.write_text("")
    with pytest.raises(ParseError) as info:
        load_config(path)
    assert (info.value.line, info.value.column) == (1, 1)


def test_parse_error_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "scenario": "g2-vs-time",\n  "masterSeed": 7,,\n}')
    with pytest.raises(ParseError) as info:
        load_config(path)
    assert info.value.line == 3
    assert "line 3" in str(info.value)


def test_missing_file(tmp_path):
    with pytest.raises(IoError):
        load_config(tmp_path / "nope.json")


def test_out_of_range_efficiency_named():
    with pytest.raises(ValidationError) as info:
        config_from_dict(base(physics={"eta_D": 1.2}))
    assert any("eta_D" in p and "[0, 1]" in p for p in info.value.problems)


def test_every_problem_listed():
    data = {
        "scenario": "nonsense",
        "physics": {"eta_D": 1.2, "tau0": 0, "colour": 3},
        "geometry": {"focalLength_m": -1},
        "trialsPerPoint": 0,
        "readoutMode": "maybe",
        "extra": 1,
    }
    with pytest.raises(ValidationError) as info:
        config_from_dict(data)
    text = " | ".join(info.value.problems)
    for needle in ("scenario", "masterSeed", "eta_D", "tau0", "physics.colour", "focal_length",
                   "trialsPerPoint", "readoutMode", "'extra'"):
        assert needle in text


@pytest.mark.parametrize(
    "changes",
    [
        {"masterSeed": None},
        {"masterSeed": -1},
        {"masterSeed": 2**64},
        {"masterSeed": 1.5},
        {"trialsPerPoint": 0},
        {"timePoints": []},
        {"timePoints": [-5]},
        {"modeCounts": [3]},
        {"modeCounts": [14]},
        {"fit": {"tauBracket_us": [10, 1]}},
        {"modeSweep": {"physicsOverrides": {"eta_t": 3}}},
        {"geometry": {"elements": [{"kind": "Prism"}]}},
    ],
)
def test_invalid_values_rejected(changes):
    with pytest.raises(ValidationError):
        config_from_dict(base(**changes))


def test_scenario_sets_default_readout():
    assert config_from_dict(base()).readout == "unconditioned"
    assert config_from_dict(base(scenario="mode-sweep")).readout == "conditioned"
    assert config_from_dict(base(scenario="mode-sweep", readoutMode="unconditioned")).readout == "unconditioned"


def test_geometry_elements_parsed():
    cfg = config_from_dict(base(geometry={"elements": [{"kind": "ThinLens", "focal_length": 0.1}]}))
    assert cfg.trace_elements == (ThinLens(0.1),)


def test_echo_reload_identity(tmp_path):
    cfg = load_config("paper-defaults")
    path = tmp_path / "echo.json"
    dump_config(cfg, path)
    again = load_config(path)
    assert again == cfg
    assert again.to_dict() == cfg.to_dict()
    assert again.config_hash() == cfg.config_hash()


@given(
    st.sampled_from(["retrieval-vs-time", "g2-vs-time", "mode-sweep", "geometry-check"]),
    st.integers(0, 2**64 - 1),
    st.integers(1, 10**8),
    st.floats(0.001, 0.04),
    st.lists(st.floats(0, 2000), min_size=1, max_size=5),
)
def test_echo_round_trip_property(scenario, seed, trials, chi, times):
    cfg = config_from_dict(
        base(scenario=scenario, masterSeed=seed, trialsPerPoint=trials, physics={"chi": chi}, timePoints=times)
    )
    again = config_from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg and again.config_hash() == cfg.config_hash()


def test_hash_tracks_content_not_output_dir():
    a = config_from_dict(base())
    assert config_from_dict(base(outputDir="elsewhere")).config_hash() == a.config_hash()
    assert config_from_dict(base(masterSeed=8)).config_hash() != a.config_hash()
    assert config_from_dict(base(physics={"chi": 0.02})).config_hash() != a.config_hash()


def test_raw_reader_returns_dict():
    data = read_config_data("paper-defaults")
    assert data["modeSweep"]["physicsOverrides"] == {"eta_t": 0.4416}
    assert isinstance(config_from_dict(data), ExperimentConfig)
