"""Wilson-interval coverage of the retrieval estimator over reseeded runs.

    python3 scripts/coverage_study.py --runs 100 --trials 10000000 --t 0
"""

import argparse

import numpy as np

from cavqi.config import load_config
from cavqi.estimators import estimate_retrieval
from cavqi.trial_engine import run_batch


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="paper-defaults")
    ap.add_argument("--runs", type=int, default=100)
    ap.add_argument("--trials", type=int, default=10_000_000)
    ap.add_argument("--t", type=float, default=0.0, help="storage time in us")
    ap.add_argument("--readout", default="unconditioned", choices=["unconditioned", "conditioned"])
    args = ap.parse_args()

    cfg = load_config(args.config)
    p = cfg.physics
    truth = float(p.decay(args.t))
    values, hits = [], 0
    for i in range(args.runs):
        table = run_batch(p, args.t, args.trials, cfg.master_seed + i, readout=args.readout)
        est = estimate_retrieval(table, p.eta_aS)["multiplexed"]
        values.append(est.value)
        hits += est.contains(truth)
        print(f"run {i:3d}  R={est.value:.4f}  [{est.ci_low:.4f}, {est.ci_high:.4f}]  {'in' if est.contains(truth) else 'OUT'}")
    values = np.array(values)
    print(f"truth {truth:.4f}  mean {values.mean():.4f}  sd {values.std(ddof=1):.4f}  "
          f"bias/sd {(values.mean() - truth) / values.std(ddof=1) * np.sqrt(len(values)):.2f} (in units of the SE of the mean)")
    print(f"coverage {hits}/{args.runs} = {hits / args.runs:.1%}")


if __name__ == "__main__":
    main()
