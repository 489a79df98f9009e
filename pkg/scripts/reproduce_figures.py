"""Run every scenario on the bundled defaults and write results under one directory.

    python3 scripts/reproduce_figures.py --out results --trials 10000000
"""

import argparse
import time
from pathlib import Path

from cavqi.config import SCENARIOS, config_from_dict, read_config_data
from cavqi.scenarios import run_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="paper-defaults")
    ap.add_argument("--out", default="results")
    ap.add_argument("--trials", type=int, default=None, help="override trialsPerPoint")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--scenarios", nargs="*", default=list(SCENARIOS))
    args = ap.parse_args()

    for scenario in args.scenarios:
        data = read_config_data(args.config)
        data["scenario"] = scenario
        data["readoutMode"] = None
        if args.trials:
            data["trialsPerPoint"] = args.trials
        if args.seed is not None:
            data["masterSeed"] = args.seed
        cfg = config_from_dict(data)
        start = time.perf_counter()
        bundle = run_scenario(cfg, Path(args.out) / scenario)
        print(f"{scenario:18s} {time.perf_counter() - start:7.1f} s  fit={bundle.summary.get('fit')}")


if __name__ == "__main__":
    main()
