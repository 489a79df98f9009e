"""Experiment configuration: JSON loading, validation, defaults and hashing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .errors import DomainError, IoError, ParseError, ValidationError
from .memory_model import PhysicsParams
from .mode_array import CavityGeometry, element_from_dict, element_to_dict

SCENARIOS = ("retrieval-vs-time", "g2-vs-time", "mode-sweep", "geometry-check")
READOUT_MODES = ("conditioned", "unconditioned")
DEFAULT_READOUT = {
    "retrieval-vs-time": "unconditioned",
    "g2-vs-time": "unconditioned",
    "mode-sweep": "conditioned",
    "geometry-check": "unconditioned",
}
BUNDLED = {"paper-defaults": "paper-defaults.json"}

PHYSICS_KEYS = {
    "chi": "chi", "R0": "R0", "tau0": "tau0", "F": "F", "xi_se": "xi_se", "Z": "Z",
    "eta_esp": "eta_esp", "eta_t": "eta_t", "eta_D": "eta_D", "eta_S": "eta_S", "m": "m",
    "channelOverrides": "channel_overrides",
}
GEOMETRY_KEYS = {
    "focalLength_m": "focal_length",
    "modePitch_m": "mode_pitch",
    "bdDisplacement_m": "bd_displacement",
    "armLengths_m": "arm_lengths",
    "thetaR_deg": "theta_r_deg",
    "divergence_deg": "divergence_deg",
    "paraxialBound_rad": "paraxial_bound",
}
TOP_KEYS = {
    "physics", "geometry", "scenario", "timePoints", "modeCounts", "trialsPerPoint",
    "masterSeed", "readoutMode", "outputDir", "modeSweep", "fit",
}
MODE_SWEEP_KEYS = {"storageTime_us", "physicsOverrides"}
FIT_KEYS = {"weighted", "tauBracket_us"}


@dataclass(frozen=True)
class ExperimentConfig:
    physics: PhysicsParams
    geometry: CavityGeometry
    scenario: str
    master_seed: int
    time_points: tuple = tuple(float(t) for t in range(0, 900, 100))
    mode_counts: tuple = (2, 4, 6, 8, 10, 12)
    trials_per_point: int = 1_000_000
    readout_mode: str | None = None
    output_dir: str = "results"
    trace_elements: tuple | None = None
    mode_sweep_time: float = 0.0
    mode_sweep_overrides: dict = field(default_factory=dict)
    fit_weighted: bool = True
    tau_bracket: tuple = (1.0, 1.0e6)

    @property
    def readout(self) -> str:
        return self.readout_mode or DEFAULT_READOUT[self.scenario]

    @property
    def seed(self) -> int:
        return self.master_seed

    @property
    def mode_sweep_physics(self) -> PhysicsParams:
        return replace(self.physics, **self.mode_sweep_overrides)

    def to_dict(self) -> dict:
        """Fully resolved JSON form; ``load_config`` of this reproduces the config."""
        phys = {k: getattr(self.physics, attr) for k, attr in PHYSICS_KEYS.items()}
        phys["channelOverrides"] = {k: dict(v) for k, v in sorted(self.physics.channel_overrides.items())}
        geom = {k: getattr(self.geometry, attr) for k, attr in GEOMETRY_KEYS.items()}
        geom["armLengths_m"] = list(self.geometry.arm_lengths)
        if self.trace_elements is not None:
            geom["elements"] = [element_to_dict(e) for e in self.trace_elements]
        return {
            "scenario": self.scenario,
            "masterSeed": self.master_seed,
            "physics": phys,
            "geometry": geom,
            "timePoints": list(self.time_points),
            "modeCounts": list(self.mode_counts),
            "trialsPerPoint": self.trials_per_point,
            "readoutMode": self.readout,
            "outputDir": self.output_dir,
            "modeSweep": {
                "storageTime_us": self.mode_sweep_time,
                "physicsOverrides": dict(self.mode_sweep_overrides),
            },
            "fit": {"weighted": self.fit_weighted, "tauBracket_us": list(self.tau_bracket)},
        }

    def config_hash(self) -> str:
        """sha256 over the canonical resolved config, output directory excluded."""
        data = self.to_dict()
        data.pop("outputDir")
        blob = json.dumps(data, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def bundled_config_path(name: str = "paper-defaults") -> Path:
    return Path(str(resources.files("cavqi") / "data" / BUNDLED[name]))


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def config_from_dict(data) -> ExperimentConfig:
    """Validate a decoded JSON object; every problem is reported at once."""
    problems: list[str] = []
    if not isinstance(data, dict):
        raise ValidationError("config must be a JSON object")
    for key in sorted(set(data) - TOP_KEYS):
        problems.append(f"unknown key {key!r}")

    scenario = data.get("scenario")
    if scenario not in SCENARIOS:
        problems.append(f"scenario must be one of {list(SCENARIOS)}, got {scenario!r}")
    seed = data.get("masterSeed")
    if not (_is_int(seed) and 0 <= seed < 2**64):
        problems.append(f"masterSeed must be given explicitly as an unsigned 64-bit integer, got {seed!r}")

    # physics
    raw_phys = data.get("physics", {})
    physics = None
    if not isinstance(raw_phys, dict):
        problems.append("physics must be an object")
    else:
        for key in sorted(set(raw_phys) - set(PHYSICS_KEYS)):
            problems.append(f"unknown key physics.{key}")
        kwargs = {PHYSICS_KEYS[k]: v for k, v in raw_phys.items() if k in PHYSICS_KEYS}
        overrides = kwargs.get("channel_overrides", {})
        if not isinstance(overrides, dict) or not all(isinstance(v, dict) for v in overrides.values()):
            problems.append("physics.channelOverrides must map channel names to objects")
            kwargs.pop("channel_overrides", None)
        else:
            valid_names = {f"{i}{p}" for i in range(1, 7) for p in "HV"}
            for name in sorted(set(overrides) - valid_names):
                problems.append(f"physics.channelOverrides has unknown channel {name!r}")
        try:
            physics = PhysicsParams(**kwargs)
        except ValidationError as exc:
            problems.extend(f"physics.{p}" for p in exc.problems)

    # geometry
    raw_geom = data.get("geometry", {})
    geometry = None
    trace_elements = None
    if not isinstance(raw_geom, dict):
        problems.append("geometry must be an object")
    else:
        for key in sorted(set(raw_geom) - set(GEOMETRY_KEYS) - {"elements"}):
            problems.append(f"unknown key geometry.{key}")
        kwargs = {GEOMETRY_KEYS[k]: v for k, v in raw_geom.items() if k in GEOMETRY_KEYS}
        try:
            geometry = CavityGeometry(**kwargs)
        except (DomainError, TypeError) as exc:
            problems.append(f"geometry: {exc}")
        if "elements" in raw_geom:
            try:
                trace_elements = tuple(element_from_dict(e) for e in raw_geom["elements"])
            except (DomainError, TypeError) as exc:
                problems.append(f"geometry.elements: {exc}")

    time_points = data.get("timePoints", list(ExperimentConfig.time_points))
    if (
        not isinstance(time_points, list)
        or not time_points
        or not all(_is_number(t) and t >= 0 for t in time_points)
    ):
        problems.append("timePoints must be a non-empty list of non-negative numbers")
    mode_counts = data.get("modeCounts", list(ExperimentConfig.mode_counts))
    if (
        not isinstance(mode_counts, list)
        or not mode_counts
        or not all(_is_int(n) and 2 <= n <= 12 and n % 2 == 0 for n in mode_counts)
    ):
        problems.append("modeCounts must be a non-empty list of even integers in 2..12")
    trials = data.get("trialsPerPoint", ExperimentConfig.trials_per_point)
    if not (_is_int(trials) and trials >= 1):
        problems.append(f"trialsPerPoint must be an integer >= 1, got {trials!r}")
    readout = data.get("readoutMode")
    if readout is not None and readout not in READOUT_MODES:
        problems.append(f"readoutMode must be one of {list(READOUT_MODES)}, got {readout!r}")
    output_dir = data.get("outputDir", ExperimentConfig.output_dir)
    if not isinstance(output_dir, str) or not output_dir:
        problems.append("outputDir must be a non-empty string")

    sweep = data.get("modeSweep", {})
    sweep_time, sweep_overrides = 0.0, {}
    if not isinstance(sweep, dict):
        problems.append("modeSweep must be an object")
    else:
        for key in sorted(set(sweep) - MODE_SWEEP_KEYS):
            problems.append(f"unknown key modeSweep.{key}")
        sweep_time = sweep.get("storageTime_us", 0.0)
        if not (_is_number(sweep_time) and sweep_time >= 0):
            problems.append("modeSweep.storageTime_us must be a non-negative number")
        raw_over = sweep.get("physicsOverrides", {})
        if not isinstance(raw_over, dict):
            problems.append("modeSweep.physicsOverrides must be an object")
        else:
            for key in sorted(set(raw_over) - set(PHYSICS_KEYS) - {"channelOverrides"}):
                problems.append(f"unknown key modeSweep.physicsOverrides.{key}")
            sweep_overrides = {PHYSICS_KEYS[k]: v for k, v in raw_over.items() if k in PHYSICS_KEYS}
            if physics is not None:
                try:
                    replace(physics, **sweep_overrides)
                except ValidationError as exc:
                    problems.extend(f"modeSweep.physicsOverrides: {p}" for p in exc.problems)

    fit = data.get("fit", {})
    weighted, bracket = True, (1.0, 1.0e6)
    if not isinstance(fit, dict):
        problems.append("fit must be an object")
    else:
        for key in sorted(set(fit) - FIT_KEYS):
            problems.append(f"unknown key fit.{key}")
        weighted = fit.get("weighted", True)
        if not isinstance(weighted, bool):
            problems.append("fit.weighted must be true or false")
        bracket = fit.get("tauBracket_us", [1.0, 1.0e6])
        if not (
            isinstance(bracket, list) and len(bracket) == 2
            and all(_is_number(v) for v in bracket) and 0 < bracket[0] < bracket[1]
        ):
            problems.append("fit.tauBracket_us must be [low, high] with 0 < low < high")

    if problems:
        raise ValidationError(problems)
    return ExperimentConfig(
        physics=physics,
        geometry=geometry,
        scenario=scenario,
        master_seed=seed,
        time_points=tuple(float(t) for t in time_points),
        mode_counts=tuple(mode_counts),
        trials_per_point=trials,
        readout_mode=readout or DEFAULT_READOUT[scenario],
        output_dir=output_dir,
        trace_elements=trace_elements,
        mode_sweep_time=float(sweep_time),
        mode_sweep_overrides=sweep_overrides,
        fit_weighted=weighted,
        tau_bracket=tuple(float(v) for v in bracket),
    )


def read_config_data(path) -> dict:
    """Decoded JSON of a config file, before validation."""
    path = Path(path)
    if not path.exists() and path.stem in BUNDLED:
        path = bundled_config_path(path.stem)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoError(f"cannot read config ({exc.strerror or exc})", path) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", exc.lineno, exc.colno) from exc
    return data


def load_config(path) -> ExperimentConfig:
    return config_from_dict(read_config_data(path))


def dump_config(config: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
