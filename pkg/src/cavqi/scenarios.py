"""Scenario orchestration and result persistence.

A scenario produces a ResultBundle: CSV rows with a fixed column order, a
JSON-able summary and a list of figure specs.  ``write_results`` turns the
bundle into results.csv, summary.json, one SVG per figure and manifest.json.
Every file carries the master seed and the config hash; the CSV keeps its
header on the first line and puts them in a trailing ``#`` comment.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from . import __version__
from .config import ExperimentConfig
from .errors import BoundaryOptimum, CavqiError, DegenerateData, IoError, NoStokesCounts, NonConvergence, ZeroDenominator
from .estimators import estimate_g2, estimate_pair_total, estimate_pS_total, estimate_retrieval
from .fitting import fit_decay, fit_g2_curve, fit_linear_origin
from .memory_model import analytic_g2, coincidence_prob, printed_g2, retrieval_efficiency, stokes_click_prob
from .mode_array import (
    LABELS,
    ModeArray,
    check_path_equality,
    default_round_trip_elements,
    default_trace_elements,
    launch_rays,
    round_trip,
)
from .trial_engine import run_batch

CSV_COLUMNS = {
    "retrieval-vs-time": ("t_us", "R_est", "R_ci_low", "R_ci_high", "n_trials"),
    "g2-vs-time": ("t_us", "g2_est", "g2_ci_low", "g2_ci_high", "g2_derived", "g2_printed", "n_trials"),
    "mode-sweep": ("N", "PS_est", "PS_ci_low", "PS_ci_high", "PSaS_est", "PSaS_ci_low", "PSaS_ci_high", "n_trials"),
    "geometry-check": ("mode", "path_length_m"),
}
FAILURE_MARKER = "FAILED"


@dataclass
class ResultBundle:
    config: ExperimentConfig
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    figures: list = field(default_factory=list)
    error: str | None = None

    @property
    def scenario(self) -> str:
        return self.config.scenario

    @property
    def columns(self) -> tuple:
        return CSV_COLUMNS[self.scenario]

    @property
    def failed(self) -> bool:
        return self.error is not None


class ScenarioFailed(CavqiError):
    """Wraps the module error that stopped a scenario; ``bundle`` holds the partial results."""

    def __init__(self, cause: Exception, bundle: ResultBundle):
        self.cause = cause
        self.bundle = bundle
        super().__init__(f"{bundle.scenario} failed: {type(cause).__name__}: {cause}")


# ---------------------------------------------------------------------------
# scenarios


def _retrieval_row(table, eta_aS):
    try:
        est = estimate_retrieval(table, eta_aS)["multiplexed"]
        return est.value, est.ci_low, est.ci_high, est.stderr
    except NoStokesCounts:
        return math.nan, 0.0, 1.0, math.nan


def _retrieval_vs_time(cfg: ExperimentConfig, bundle: ResultBundle, workers):
    p = cfg.physics
    n = cfg.trials_per_point
    points = []
    for i, t in enumerate(cfg.time_points):
        table = run_batch(p, t, n, cfg.master_seed, readout=cfg.readout, stream=i, workers=workers)
        value, lo, hi, se = _retrieval_row(table, p.eta_aS)
        bundle.rows.append((t, value, lo, hi, n))
        points.append((t, value, se))
    fit = _safe_fit(lambda: fit_decay(_fit_points(points), tau_bracket=cfg.tau_bracket, weighted=cfg.fit_weighted))
    bundle.summary["fit"] = fit
    bundle.summary["model"] = {"R0": p.R0, "tau0_us": p.tau0}
    tt = np.linspace(0.0, max(cfg.time_points), 200)
    curves = [("model", tt, retrieval_efficiency(tt, p.decay))]
    if fit.get("R0") is not None:
        curves.append(("fit", tt, fit["R0"] * (np.exp(-(tt / fit["tau0"]) ** 2) + np.exp(-tt / fit["tau0"])) / 2))
    bundle.figures.append(_figure_spec("retrieval", "storage time (us)", "intrinsic retrieval efficiency", bundle.rows, curves))


def _g2_vs_time(cfg: ExperimentConfig, bundle: ResultBundle, workers):
    p = cfg.physics
    n = cfg.trials_per_point
    points = []
    for i, t in enumerate(cfg.time_points):
        table = run_batch(p, t, n, cfg.master_seed, readout=cfg.readout, stream=i, workers=workers)
        try:
            est = estimate_g2(table)
            value, lo, hi, se = est.value, est.ci_low, est.ci_high, est.stderr
        except ZeroDenominator:
            value, lo, hi, se = math.nan, 0.0, math.inf, math.nan
        derived = float(analytic_g2(p, t))
        printed = float(printed_g2(p, t))
        bundle.rows.append((t, value, lo, hi, derived, printed, n))
        points.append((t, value, se))
    fixed = {"chi": p.chi, "R0": p.R0, "tau0": p.tau0, "F": p.F, "Z": p.Z}
    fit = _safe_fit(lambda: fit_g2_curve(_fit_points(points), fixed))
    bundle.summary["fit"] = fit
    bundle.summary["model"] = {"xi_se": p.xi_se}
    tt = np.linspace(0.0, max(cfg.time_points), 200)
    curves = [("derived form", tt, analytic_g2(p, tt))]
    bundle.figures.append(_figure_spec("g2", "storage time (us)", "g2 (Stokes, anti-Stokes)", bundle.rows, curves))


def _mode_sweep(cfg: ExperimentConfig, bundle: ResultBundle, workers):
    p = cfg.mode_sweep_physics
    n = cfg.trials_per_point
    ps_points, pair_points = [], []
    for i, N in enumerate(cfg.mode_counts):
        table = run_batch(p.with_modes(N // 2), cfg.mode_sweep_time, n, cfg.master_seed,
                          readout=cfg.readout, stream=1000 + i, workers=workers)
        ps = estimate_pS_total(table)
        pair = estimate_pair_total(table)
        bundle.rows.append((N, ps.value, ps.ci_low, ps.ci_high, pair.value, pair.ci_low, pair.ci_high, n))
        ps_points.append((N, ps.value, ps.stderr))
        pair_points.append((N, pair.value, pair.stderr))
    fit_ps = _safe_fit(lambda: fit_linear_origin(_fit_points(ps_points)))
    fit_pair = _safe_fit(lambda: fit_linear_origin(_fit_points(pair_points)))
    bundle.summary["fit"] = {"PS_slope": fit_ps, "PSaS_slope": fit_pair}
    bundle.summary["model"] = {
        "PS_per_mode": stokes_click_prob(p),
        "PSaS_per_mode": float(coincidence_prob(p, cfg.mode_sweep_time)),
        "storageTime_us": cfg.mode_sweep_time,
    }
    NN = np.array([0.0, max(cfg.mode_counts)])
    curves_ps = [("fit", NN, NN * fit_ps["slope"])] if fit_ps.get("slope") is not None else []
    curves_pair = [("fit", NN, NN * fit_pair["slope"])] if fit_pair.get("slope") is not None else []
    rows_ps = [(r[0], r[1], r[2], r[3]) for r in bundle.rows]
    rows_pair = [(r[0], r[4], r[5], r[6]) for r in bundle.rows]
    bundle.figures.append(_figure_spec("mode_sweep_stokes", "number of modes N", "P_S(N)", rows_ps, curves_ps))
    bundle.figures.append(_figure_spec("mode_sweep_pairs", "number of modes N", "P_S,aS(N)", rows_pair, curves_pair))


def all_grids():
    for perm in itertools.permutations(LABELS):
        yield ModeArray((perm[0:2], perm[2:4], perm[4:6]))


def _geometry_check(cfg: ExperimentConfig, bundle: ResultBundle, workers):
    geom = cfg.geometry
    elements = default_round_trip_elements(geom)
    for grid in all_grids():
        round_trip(grid, elements)  # raises NonReproducingCavity otherwise
    trace = list(cfg.trace_elements) if cfg.trace_elements is not None else default_trace_elements(geom)
    report = check_path_equality(trace, launch_rays(geom), geom.paraxial_bound)
    for label, length in zip(report.labels, report.per_mode_path_length):
        bundle.rows.append((label, length))
    bundle.summary.update(report.to_dict())
    bundle.summary["roundTripIdentity"] = True
    bundle.summary["report"] = report.to_text()
    mean = float(np.mean(report.per_mode_path_length))
    bars = [(i, (v - mean) / mean) for i, v in enumerate(report.per_mode_path_length)]
    bundle.figures.append({"name": "geometry", "kind": "bar", "bars": bars, "labels": list(report.labels),
                           "xlabel": "arm", "ylabel": "relative path-length deviation"})


SCENARIO_RUNNERS = {
    "retrieval-vs-time": _retrieval_vs_time,
    "g2-vs-time": _g2_vs_time,
    "mode-sweep": _mode_sweep,
    "geometry-check": _geometry_check,
}


def _fit_points(points):
    """Rows usable by a fitter: finite values with positive sigma (else unit weight)."""
    pts = [(x, y, s) for x, y, s in points if math.isfinite(y)]
    if not pts:
        raise DegenerateData("no finite estimates to fit")
    sig = [s for _, _, s in pts if math.isfinite(s) and s > 0]
    floor = min(sig) if sig else 1.0
    return [(x, y, s if math.isfinite(s) and s > 0 else floor) for x, y, s in pts]


def _safe_fit(run) -> dict:
    """Fit summary as a flat dict; fit failures are recorded, not raised."""
    try:
        result = run()
        status = "ok"
    except (NonConvergence, BoundaryOptimum) as exc:
        result, status = exc.result, type(exc).__name__
    except CavqiError as exc:
        return {"status": f"{type(exc).__name__}: {exc}", "residual_norm": None}
    out = {"status": status, "residual_norm": result.residual_norm, "iterations": result.iterations}
    for name, value, se in zip(result.param_names, result.values, result.std_errors):
        out[name] = value
        out[f"{name}_stderr"] = se
    return out


def _figure_spec(name, xlabel, ylabel, rows, curves):
    return {"name": name, "kind": "points", "xlabel": xlabel, "ylabel": ylabel,
            "points": [(r[0], r[1], r[2], r[3]) for r in rows], "curves": curves}


def run_scenario(config: ExperimentConfig, out_dir=None, *, workers: int | None = None) -> ResultBundle:
    """Execute ``config.scenario``.

    On a module error the partial bundle is written to ``out_dir`` (when
    given) with a failure marker, and ScenarioFailed is raised.
    """
    bundle = ResultBundle(config)
    bundle.summary.update(_header(config))
    try:
        SCENARIO_RUNNERS[config.scenario](config, bundle, workers)
    except CavqiError as exc:
        bundle.error = f"{type(exc).__name__}: {exc}"
        if out_dir is not None:
            write_results(bundle, out_dir)
        raise ScenarioFailed(exc, bundle) from exc
    if out_dir is not None:
        write_results(bundle, out_dir)
    return bundle


def _header(config: ExperimentConfig) -> dict:
    return {
        "scenario": config.scenario,
        "seed": config.master_seed,
        "config_hash": config.config_hash(),
        "readoutMode": config.readout,
        "trialsPerPoint": config.trials_per_point,
        "version": __version__,
    }


# ---------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def csv_text(bundle: ResultBundle) -> str:
    cfg = bundle.config
    lines = [",".join(bundle.columns)]
    lines += [",".join(_fmt(v) for v in row) for row in bundle.rows]
    lines.append(f"# seed={cfg.master_seed} config_hash={cfg.config_hash()}")
    return "\n".join(lines) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def summary_json(bundle: ResultBundle) -> str:
    out = dict(bundle.summary)
    out["status"] = "failed" if bundle.failed else "ok"
    if bundle.failed:
        out["error"] = bundle.error
    out["rows"] = len(bundle.rows)
    out["config"] = bundle.config.to_dict()
    return json.dumps(_jsonable(out), indent=2, sort_keys=True) + "\n"


def render_svg(spec: dict, path: Path, stamp: str) -> None:
    fig = Figure(figsize=(5.0, 3.6))
    ax = fig.add_subplot()
    if spec["kind"] == "bar":
        xs = [b[0] for b in spec["bars"]]
        ax.bar(xs, [b[1] for b in spec["bars"]], color="tab:blue")
        ax.set_xticks(xs, spec["labels"], rotation=90, fontsize=7)
    else:
        pts = [p for p in spec["points"] if math.isfinite(p[1])]
        if pts:
            x = np.array([p[0] for p in pts], dtype=float)
            y = np.array([p[1] for p in pts], dtype=float)
            lo = np.array([p[2] for p in pts], dtype=float)
            hi = np.array([p[3] for p in pts], dtype=float)
            hi = np.where(np.isfinite(hi), hi, y)
            ax.errorbar(x, y, yerr=[np.maximum(y - lo, 0), np.maximum(hi - y, 0)], fmt="o", ms=4, capsize=2, label="simulated")
        for label, cx, cy in spec["curves"]:
            ax.plot(cx, cy, "-", lw=1, label=label)
        ax.legend(fontsize=7, frameon=False)
    ax.set_xlabel(spec["xlabel"])
    ax.set_ylabel(spec["ylabel"])
    ax.set_title(stamp, fontsize=6)
    fig.tight_layout()
    with matplotlib.rc_context({"svg.hashsalt": "cavqi", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None, "Description": stamp})


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_results(bundle: ResultBundle, out_dir) -> dict:
    """Write all outputs and return the manifest dict (also saved as manifest.json)."""
    out = Path(out_dir)
    cfg = bundle.config
    stamp = f"seed={cfg.master_seed} config_hash={cfg.config_hash()}"
    written = []
    target = out
    try:
        out.mkdir(parents=True, exist_ok=True)
        target = out / "results.csv"
        target.write_text(csv_text(bundle))
        written.append(target)
        target = out / "summary.json"
        target.write_text(summary_json(bundle))
        written.append(target)
        for spec in bundle.figures:
            target = out / f"{spec['name']}.svg"
            render_svg(spec, target, stamp)
            written.append(target)
        marker = out / FAILURE_MARKER
        if bundle.failed:
            target = marker
            marker.write_text(f"{bundle.error}\n{stamp}\n")
            written.append(marker)
        elif marker.exists():
            marker.unlink()
        manifest = {
            "scenario": bundle.scenario,
            "seed": cfg.master_seed,
            "config_hash": cfg.config_hash(),
            "status": "failed" if bundle.failed else "ok",
            "files": [{"path": p.name, "sha256": _sha256(p), "bytes": p.stat().st_size} for p in written],
        }
        target = out / "manifest.json"
        target.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write results ({exc.strerror or exc})", target) from exc
    return manifest
