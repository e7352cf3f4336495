#!/usr/bin/env python3
"""Run every config file given on the command line and write results/<name>.csv."""
import argparse
import sys
from pathlib import Path

from stickperm.experiment import ExperimentConfig, run, verify_identity, write_csv, write_rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("configs", nargs="+", type=Path)
    ap.add_argument("--results", type=Path, default=Path("results"))
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--reps", type=int, help="override replicate count (quick looks)")
    args = ap.parse_args()
    args.results.mkdir(parents=True, exist_ok=True)

    for path in args.configs:
        overrides = {"workers": args.workers}
        if args.reps:
            overrides["reps"] = args.reps
        cfg = ExperimentConfig.from_file(path, **overrides)
        out = args.results / f"{path.stem}.csv"
        if cfg.kind == "verify-identity":
            rep = verify_identity(cfg)
            write_rows(out, list(rep.rows[0]), rep.rows)
            print(f"{path.name}: {len(rep.failures)} failures -> {out}")
            continue
        res = run(cfg)
        write_csv(res, out)
        print(f"{path.name}: {len(res.rows)} rows in {res.wall_clock:.1f}s -> {out}")
        for s in res.summary:
            print("   ", {k: round(float(v), 6) if isinstance(v, float) else v for k, v in s.items()})
    return 0


if __name__ == "__main__":
    sys.exit(main())
