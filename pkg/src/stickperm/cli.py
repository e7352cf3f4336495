"""Command line front end: ``stickperm <subcommand> [flags]``.

Exit codes: 0 success, 1 validation error, 2 acceptance-check failure,
3 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from .errors import DomainError, NumericError, ValidationError
from .experiment import ExperimentConfig, format_csv, run

log = logging.getLogger("stickperm")

EXIT_OK, EXIT_VALIDATION, EXIT_CHECK, EXIT_NUMERIC = 0, 1, 2, 3

_KIND = {
    "simulate": "et-clt",
    "exact": "exact-oracle",
    "walk": "walk",
    "stable-input": "stable-input",
    "poisson": "poisson",
    "verify-identity": "verify-identity",
    "limits": "limits",
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stickperm", description="Stick-breaking permutation experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value file; flags override its entries")
    common.add_argument("--model", help="beta:a,b | paretolog:alpha | table:<path>")
    common.add_argument("--case", choices=("a", "b", "c"))
    common.add_argument("--grid", help="comma separated n- or x-grid")
    common.add_argument("--reps", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="CSV path (stdout when omitted)")
    common.add_argument("--workers", type=int)
    for name in _KIND:
        sp = sub.add_parser(name, parents=[common])
        if name == "simulate":
            sp.add_argument("--stats-out", help="per-replicate n,K_n,logT,logO,gap CSV")
        elif name == "exact":
            sp.add_argument("--law-out", help="write the exact partition table here")
        elif name == "poisson":
            sp.add_argument("--beta", type=float)
            sp.add_argument("--tail-draws", type=int)
    return p


def _config(args) -> ExperimentConfig:
    overrides = {k: getattr(args, k, None) for k in
                 ("model", "case", "grid", "reps", "seed", "out", "workers", "beta",
                  "tail_draws", "stats_out", "law_out")}
    overrides["kind"] = _KIND[args.command]
    if args.config:
        return ExperimentConfig.from_file(args.config, **overrides)
    return ExperimentConfig.from_mapping(overrides)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
        result = run(cfg)
    except (ValidationError, DomainError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    if not cfg.out:
        sys.stdout.write(format_csv(result.columns, result.rows))
    if result.summary:
        cols = list(result.summary[0])
        sys.stderr.write(format_csv(cols, result.summary))
    print(f"# {len(result.rows)} rows, {result.wall_clock:.2f}s, seeds {result.seed_provenance}",
          file=sys.stderr)

    errors = [r["error"] for r in result.rows if r.get("error")]
    if errors and all(e.startswith("NumericError") for e in errors):
        return EXIT_NUMERIC
    if errors:
        for e in errors:
            print(f"row error: {e}", file=sys.stderr)
        return EXIT_CHECK
    if cfg.kind == "verify-identity" and any(r["status"] != "ok" for r in result.rows):
        return EXIT_CHECK
    if cfg.kind == "exact-oracle" and any(r["min_p"] <= 1e-3 for r in result.rows):
        print("chi-square check failed (p <= 1e-3)", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
