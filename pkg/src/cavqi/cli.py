"""Command-line entry point ``sim``.

    sim run --config FILE [--scenario NAME] [--seed U64] [--trials N] [--out DIR]
    sim geometry-check --config FILE
    sim fit --input CSV --model {decay,g2,linear} [--column NAME] [--config FILE]

Exit status: 0 success, 2 invalid input (config, arguments, CSV), 3 runtime failure.
SIM_THREADS sets the number of simulation worker threads.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys

from .config import SCENARIOS, config_from_dict, load_config, read_config_data
from .errors import (
    BoundaryOptimum,
    CavqiError,
    DegenerateData,
    DomainError,
    IoError,
    NonConvergence,
    ParseError,
    ValidationError,
)
from .estimators import Z95
from .fitting import fit_decay, fit_g2_curve, fit_linear_origin
from .mode_array import check_path_equality, default_round_trip_elements, default_trace_elements, launch_rays, round_trip
from .scenarios import ScenarioFailed, all_grids, run_scenario

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3

# default (x, y, ci_low, ci_high) columns per fit model
FIT_COLUMNS = {
    "decay": ("t_us", "R_est", "R_ci_low", "R_ci_high"),
    "g2": ("t_us", "g2_est", "g2_ci_low", "g2_ci_high"),
    "linear": ("N", "PS_est", "PS_ci_low", "PS_ci_high"),
}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sim", description="Multiplexed cavity memory simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write results")
    run.add_argument("--config", required=True, help="config JSON (or 'paper-defaults')")
    run.add_argument("--scenario", choices=SCENARIOS)
    run.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    run.add_argument("--trials", type=int, help="trials per point")
    run.add_argument("--out", help="output directory (overrides outputDir)")

    geo = sub.add_parser("geometry-check", help="round-trip identity and path-length report")
    geo.add_argument("--config", required=True)

    fit = sub.add_parser("fit", help="fit a model to a results CSV")
    fit.add_argument("--input", required=True)
    fit.add_argument("--model", required=True, choices=sorted(FIT_COLUMNS))
    fit.add_argument("--column", help="y column (for example PSaS_est for the pair-rate slope)")
    fit.add_argument("--config", default="paper-defaults", help="fixed physics for the g2 model")
    return ap


def _load(args, **overrides):
    data = read_config_data(args.config)
    if not isinstance(data, dict):
        raise ValidationError("config must be a JSON object")
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    if overrides.get("scenario") is not None:
        # the readout default follows the scenario unless the file pins it
        data.setdefault("readoutMode", None)
    return config_from_dict(data)


def cmd_run(args) -> int:
    cfg = _load(args, scenario=args.scenario, masterSeed=args.seed, trialsPerPoint=args.trials, outputDir=args.out)
    try:
        bundle = run_scenario(cfg, cfg.output_dir)
    except ScenarioFailed as exc:
        print(f"error: {exc}; partial results in {cfg.output_dir}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"{cfg.scenario}: {len(bundle.rows)} rows written to {cfg.output_dir} "
          f"(seed {cfg.master_seed}, config {cfg.config_hash()[:12]})")
    if "fit" in bundle.summary:
        print(json.dumps(bundle.summary["fit"], indent=2, sort_keys=True, default=str))
    return EXIT_OK


def cmd_geometry(args) -> int:
    cfg = load_config(args.config)
    geom = cfg.geometry
    elements = default_round_trip_elements(geom)
    for grid in all_grids():
        round_trip(grid, elements)
    trace = list(cfg.trace_elements) if cfg.trace_elements is not None else default_trace_elements(geom)
    report = check_path_equality(trace, launch_rays(geom), geom.paraxial_bound)
    print("round trip: identity on all 720 starting grids")
    print(report.to_text())
    print(json.dumps({**report.to_dict(), "roundTripIdentity": True}, indent=2))
    return EXIT_OK if report.passed else EXIT_RUNTIME


def read_points(path, model: str, column: str | None = None) -> list[tuple[float, float, float]]:
    """(x, y, sigma) rows from a results CSV; sigma from the 95% interval half-width.

    Lines starting with '#' are skipped.  Without interval columns every
    point gets unit weight.
    """
    try:
        with open(path, newline="") as fh:
            lines = [line for line in fh if line.strip() and not line.startswith("#")]
    except OSError as exc:
        raise IoError(f"cannot read CSV ({exc.strerror or exc})", path) from exc
    rows = list(csv.DictReader(lines))
    if not rows:
        raise DegenerateData(f"{path}: no data rows")
    xcol, ycol, locol, hicol = FIT_COLUMNS[model]
    if column is not None:
        ycol = column
        stem = column[:-4] if column.endswith("_est") else column
        locol, hicol = f"{stem}_ci_low", f"{stem}_ci_high"
    header = rows[0].keys()
    for needed in (xcol, ycol):
        if needed not in header:
            raise ParseError(f"{path}: column {needed!r} not found in header {list(header)}", 1, 1)
    points = []
    for i, row in enumerate(rows, start=2):
        try:
            x, y = float(row[xcol]), float(row[ycol])
            lo = float(row[locol]) if locol in row else math.nan
            hi = float(row[hicol]) if hicol in row else math.nan
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{path}: bad number ({exc})", i, 1) from exc
        if not math.isfinite(y):
            continue
        sigma = (hi - lo) / (2 * Z95)
        points.append((x, y, sigma if math.isfinite(sigma) and sigma > 0 else math.nan))
    good = [s for _, _, s in points if math.isfinite(s)]
    fallback = min(good) if good else 1.0
    return [(x, y, s if math.isfinite(s) else fallback) for x, y, s in points]


def cmd_fit(args) -> int:
    points = read_points(args.input, args.model, args.column)
    if args.model == "decay":
        result = fit_decay(points)
    elif args.model == "g2":
        p = load_config(args.config).physics
        result = fit_g2_curve(points, {"chi": p.chi, "R0": p.R0, "tau0": p.tau0, "F": p.F, "Z": p.Z})
    else:
        result = fit_linear_origin(points)
    print(json.dumps(result.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "geometry-check": cmd_geometry, "fit": cmd_fit}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (BoundaryOptimum, NonConvergence) as exc:
        # the fit still produced numbers; show them, but flag the run
        print(json.dumps(exc.result.to_dict(), indent=2, sort_keys=True))
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ParseError, ValidationError, DegenerateData, DomainError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except CavqiError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
