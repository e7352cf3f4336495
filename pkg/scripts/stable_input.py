#!/usr/bin/env python3
"""Centered heavy-tailed sums against the stable characteristic function.

Reports the ECF distance for the centered sum and for its reflection; only the
reflected statistic has the listed law (see the notes in README).
"""
import argparse

from stickperm.experiment import ExperimentConfig, run

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--alpha", type=float, default=1.5)
ap.add_argument("--grid", default="1e3,1e4,1e5")
ap.add_argument("--reps", type=int, default=2000)
ap.add_argument("--seed", type=int, default=7)
args = ap.parse_args()

cfg = ExperimentConfig.from_mapping(dict(kind="stable-input", model=f"paretolog:{args.alpha}",
                                         grid=args.grid, reps=args.reps, seed=args.seed))
for r in run(cfg).rows:
    print(f"n={r['n']:>8}  c_n={r['c_n']:10.3f}  ecf={r['ecf_distance']:.4f}  "
          f"reflected ecf={r['ecf_distance_reflected']:.4f}  reflected KS={r['ks_reflected']:.4f}")
