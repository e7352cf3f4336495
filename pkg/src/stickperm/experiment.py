"""Seeded Monte Carlo experiments and their CSV artifacts.

Replicate ``i`` at grid point ``g`` always draws from
``SeedSequence(master_seed, spawn_key=(g, i))``, so results do not depend on
how replicates are spread over worker processes.  Rows are collected in
(grid index, replicate) order before anything is written.
"""
from __future__ import annotations

import csv
import io
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from . import cycle_statistics as cs
from . import limit_laws as ll
from . import partition_samplers as ps
from . import perturbed_walk as pw
from .errors import DomainError, NumericError, ValidationError
from .factor_models import FactorModel, RegVar, parse_model

__all__ = [
    "KINDS",
    "ExperimentConfig",
    "ExperimentResult",
    "IdentityReport",
    "check_identity",
    "replicate_rng",
    "run",
    "verify_identity",
    "limits_table",
    "write_csv",
    "format_csv",
]

KINDS = ("et-clt", "exact-oracle", "walk", "stable-input", "poisson", "verify-identity", "limits")
_INTEGER_GRID_KINDS = {"et-clt", "exact-oracle", "stable-input", "verify-identity", "limits"}
_TAIL_STREAM = 2**32 - 1
IDENTITY_TOL = 1e-9
ORACLE_P_MIN = 1e-3


def replicate_rng(master_seed: int, grid_index: int, replicate: int) -> np.random.Generator:
    ss = np.random.SeedSequence(master_seed, spawn_key=(grid_index, replicate))
    return np.random.Generator(np.random.PCG64(ss))


def _parse_grid(value, integer: bool):
    if isinstance(value, str):
        items = [v for v in (s.strip() for s in value.split(",")) if v]
    else:
        items = list(value)
    out = []
    for v in items:
        x = float(v)
        if integer:
            if not x.is_integer():
                raise ValidationError(f"grid value {v!r} must be an integer")
            x = int(x)
        out.append(x)
    return tuple(out)


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    model: str
    grid: tuple
    reps: int = 1000
    case: str = "a"
    seed: int = 0
    out: Optional[str] = None
    workers: int = 1
    beta: float = 0.25
    tail_draws: int = 1_000_000
    stats_out: Optional[str] = None
    law_out: Optional[str] = None

    _INT_KEYS = ("reps", "seed", "workers", "tail_draws")

    @classmethod
    def from_mapping(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        data = {k.replace("-", "_"): v for k, v in data.items() if v is not None}
        unknown = set(data) - {f for f in cls.__dataclass_fields__ if not f.startswith("_")}
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        for key in ("kind", "model", "grid"):
            if key not in data:
                raise ValidationError(f"config is missing {key!r}")
        kind = str(data["kind"])
        try:
            data["grid"] = _parse_grid(data["grid"], kind in _INTEGER_GRID_KINDS)
            for key in cls._INT_KEYS:
                if key in data:
                    data[key] = int(data[key]) if key == "seed" else int(float(data[key]))
            if "beta" in data:
                data["beta"] = float(data["beta"])
        except ValueError as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(str(exc)) from exc
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        """Flat ``key = value`` text; ``#`` starts a comment."""
        data: Dict[str, Any] = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValidationError(f"{path}:{lineno}: expected key=value")
            data[key.strip()] = value.strip()
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(data)

    def model_obj(self) -> FactorModel:
        return parse_model(self.model)

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValidationError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.reps < 1:
            raise ValidationError("reps must be >= 1")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        if not self.grid:
            raise ValidationError("grid must be nonempty")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ValidationError("grid must be strictly increasing")
        if self.case not in ll.CASES:
            raise ValidationError(f"case must be one of {ll.CASES}")
        model = self.model_obj()
        if self.kind in ("et-clt", "walk", "limits"):
            ll._validate_case(model, self.case)
        if self.kind == "exact-oracle" and self.grid[-1] > ps.EXACT_LAW_MAX_N:
            raise ValidationError(f"exact-oracle grid limited to n <= {ps.EXACT_LAW_MAX_N}")
        if self.kind == "stable-input":
            tail = model.tail_class
            if not (isinstance(tail, RegVar) and 1 < tail.alpha < 2):
                raise ValidationError("stable-input needs a regularly varying model with alpha in (1, 2)")
        if self.kind == "poisson" and not 0 < self.beta < 0.5:
            raise ValidationError("beta must lie in (0, 1/2)")
        if self.kind in ("poisson", "walk") and self.grid[0] < 0:
            raise ValidationError("grid must be nonnegative")
        if self.kind in _INTEGER_GRID_KINDS and self.grid[0] < 1:
            raise ValidationError("grid values must be >= 1")


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    columns: List[str]
    rows: List[Dict[str, Any]]
    summary: List[Dict[str, Any]] = field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def seed_provenance(self) -> str:
        return f"SeedSequence({self.config.seed}, spawn_key=(grid_index, replicate))"

    @property
    def ok(self) -> bool:
        return not any(r.get("error") for r in self.rows)


# ---------------------------------------------------------------------------
# replicate fan-out


def _chunk_worker(args):
    func, payload, seed, gi, start, stop = args
    return [func(payload, replicate_rng(seed, gi, i)) for i in range(start, stop)]


def _replicates(func: Callable, payload, seed: int, gi: int, reps: int, workers: int) -> list:
    if workers <= 1 or reps < 2:
        return _chunk_worker((func, payload, seed, gi, 0, reps))
    size = math.ceil(reps / (4 * workers))
    tasks = [(func, payload, seed, gi, s, min(s + size, reps)) for s in range(0, reps, size)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        chunks = list(pool.map(_chunk_worker, tasks))
    return [x for c in chunks for x in c]


def _rep_partition_stats(payload, rng):
    model, n = payload
    part = ps.sample_partition_thinning(model, n, rng)
    return (part.num_cycles, cs.log_T(part), cs.log_order(part), cs.pittel_gap(part))


def check_identity(part: ps.CyclePartition):
    """``(log T, log O, gap, |log T - log O - gap|, big-integer residual or nan)``."""
    lt, lo, gap = cs.log_T(part), cs.log_order(part), cs.pittel_gap(part)
    big = abs(lt - math.log(cs.exact_order(part)) - gap) if part.n <= cs.BIGINT_ORDER_MAX_N else float("nan")
    return lt, lo, gap, abs(lt - lo - gap), big


def _rep_identity(payload, rng):
    model, n = payload
    part = ps.sample_partition_thinning(model, n, rng)
    return check_identity(part) + (part.key,)


def _rep_exact(payload, rng):
    # the three samplers draw consecutively from the replicate stream
    model, n = payload
    return (ps.sample_partition_markov(model, n, rng).key,
            ps.sample_partition_thinning(model, n, rng).key,
            ps.sample_permutation_basic(model, n, rng).partition().key)


def _rep_walk(payload, rng):
    model, xs = payload
    path = pw.simulate_path(model, xs[-1], rng)
    return [(int(pw.rho_at(path, x)), int(pw.n_at(path, x)), pw.m_at(path, x, model),
             pw.integral_I(path, x, model), pw.integral_J(path, x)) for x in xs]


def _rep_stable(payload, rng):
    model, n, c_n = payload
    return pw.stable_walk_statistic(model, n, c_n, rng)


def _rep_poisson(payload, rng):
    model, t = payload
    return pw.sample_V(model, t, rng)


# ---------------------------------------------------------------------------
# kinds


def _err_row(base, exc):
    row = dict(base)
    row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _run_et_clt(cfg, model):
    cols = ["n", "reps", "case", "b_n", "a_n", "mean_logT", "var_logT", "mean_logO", "var_logO",
            "z_mean_logT", "z_var_logT", "ks_logT", "ks_logO", "ks_logT_selfstd", "ks_logO_selfstd",
            "max_identity_residual", "error"]
    rows = []
    stats_rows = []
    target = None
    for gi, n in enumerate(cfg.grid):
        base = {"n": n, "reps": cfg.reps, "case": cfg.case}
        try:
            norm = ll.normalization(model, n, cfg.case)
            if target is None:
                target = ll.target_cdf(cfg.case, norm.alpha)
            res = _replicates(_rep_partition_stats, (model, n), cfg.seed, gi, cfg.reps, cfg.workers)
            arr = np.array(res, dtype=float)
            k, lt, lo, gap = arr.T
            zt = ll.standardize(lt, norm.b_n, norm.a_n)
            zo = ll.standardize(lo, norm.b_n, norm.a_n)

            def selfstd(v):
                sd = v.std()
                return ll.ks_statistic((v - v.mean()) / sd, ll.normal_cdf) if sd > 0 else 1.0

            rows.append({**base, "b_n": norm.b_n, "a_n": norm.a_n,
                         "mean_logT": lt.mean(), "var_logT": lt.var(ddof=1) if cfg.reps > 1 else 0.0,
                         "mean_logO": lo.mean(), "var_logO": lo.var(ddof=1) if cfg.reps > 1 else 0.0,
                         "z_mean_logT": zt.mean(), "z_var_logT": zt.var(ddof=1) if cfg.reps > 1 else 0.0,
                         "ks_logT": ll.ks_statistic(zt, target), "ks_logO": ll.ks_statistic(zo, target),
                         "ks_logT_selfstd": selfstd(lt), "ks_logO_selfstd": selfstd(lo),
                         "max_identity_residual": float(np.max(np.abs(lt - lo - gap))), "error": ""})
            stats_rows.extend({"n": n, "K_n": int(a), "logT": b, "logO": c, "gap": d} for a, b, c, d in res)
        except (NumericError, DomainError, ValidationError) as exc:
            rows.append(_err_row(base, exc))
    if cfg.stats_out:
        write_rows(cfg.stats_out, ["n", "K_n", "logT", "logO", "gap"], stats_rows)
    return cols, rows, []


def _run_exact(cfg, model):
    names = ("markov", "thinning", "basic")
    cols = ["n", "reps", "cells"] + [f"{c}_{s}" for s in names for c in ("chi2", "p")] + \
        ["p_markov_vs_thinning", "p_markov_vs_basic", "p_thinning_vs_basic", "min_p", "error"]
    rows = []
    for gi, n in enumerate(cfg.grid):
        base = {"n": n, "reps": cfg.reps}
        try:
            law = ps.exact_partition_law(model, n)
            if cfg.law_out:
                path = cfg.law_out if len(cfg.grid) == 1 else f"{cfg.law_out}.n{n}.csv"
                law.write_csv(path)
            keys = sorted(law.table, reverse=True)
            index = {k: j for j, k in enumerate(keys)}
            probs = np.array([float(law.table[k]) for k in keys])
            res = _replicates(_rep_exact, (model, n), cfg.seed, gi, cfg.reps, cfg.workers)
            counts = np.zeros((3, len(keys)))
            for triple in res:
                for s, key in enumerate(triple):
                    counts[s, index[key]] += 1
            row = {**base, "cells": len(keys), "error": ""}
            ps_vals = []
            for s, name in enumerate(names):
                stat, p = ll.chi_square(counts[s], probs)
                row[f"chi2_{name}"], row[f"p_{name}"] = stat, p
                ps_vals.append(p)
            for (i, a), (j, b) in (((0, "markov"), (1, "thinning")), ((0, "markov"), (2, "basic")),
                                   ((1, "thinning"), (2, "basic"))):
                p = ll.chi_square_two_sample(counts[i], counts[j])[1]
                row[f"p_{a}_vs_{b}"] = p
                ps_vals.append(p)
            row["min_p"] = min(ps_vals)
            rows.append(row)
        except (NumericError, DomainError, ValidationError) as exc:
            rows.append(_err_row(base, exc))
    return cols, rows, []


def _walk_limit_cdf(case, model):
    if case in ("a", "b"):
        return lambda x: ll.normal_cdf(np.asarray(x) * math.sqrt(3.0))
    alpha = model.tail_class.alpha
    law = ll.get_stable_law(alpha)
    k = (alpha + 1.0) ** (-1.0 / alpha)
    return lambda x: law.cdf(np.asarray(x) / k)


def _run_walk(cfg, model):
    cols = ["x", "replicate", "rho", "N", "M", "I_norm", "J_norm"]
    xs = tuple(float(x) for x in cfg.grid)
    res = _replicates(_rep_walk, (model, xs), cfg.seed, 0, cfg.reps, cfg.workers)
    rows, summary = [], []
    limit = _walk_limit_cdf(cfg.case, model)
    for xi, x in enumerate(xs):
        scale = x * ll.walk_scale(model, x, cfg.case) if x > 0 else 1.0
        i_norm = np.array([r[xi][3] for r in res]) / scale
        j_norm = np.array([r[xi][4] for r in res]) / scale
        nm2 = np.array([(r[xi][1] - r[xi][2]) ** 2 for r in res])
        for rep, r in enumerate(res):
            rho, nn, m, _, _ = r[xi]
            rows.append({"x": x, "replicate": rep, "rho": rho, "N": nn, "M": m,
                         "I_norm": i_norm[rep], "J_norm": j_norm[rep]})
        summary.append({"x": x, "reps": cfg.reps, "var_I_norm": i_norm.var(ddof=1) if cfg.reps > 1 else 0.0,
                        "var_J_norm": j_norm.var(ddof=1) if cfg.reps > 1 else 0.0,
                        "ks_I_norm": ll.ks_statistic(i_norm, limit), "ks_J_norm": ll.ks_statistic(j_norm, limit),
                        "mean_sq_N_minus_M_over_x": nm2.mean() / x if x > 0 else float("nan")})
    return cols, rows, summary


STABLE_U_GRID = (-2.0, -1.0, -0.5, -0.25, 0.25, 0.5, 1.0, 2.0)


def _run_stable(cfg, model):
    cols = ["n", "reps", "alpha", "mu", "c_n", "mean", "ecf_distance", "ecf_distance_reflected",
            "ks_reflected", "error"]
    alpha = model.tail_class.alpha
    law = ll.get_stable_law(alpha)
    cf = lambda u: ll.stable_cf(alpha, u)
    rows = []
    for gi, n in enumerate(cfg.grid):
        base = {"n": n, "reps": cfg.reps, "alpha": alpha}
        try:
            c_n = ll.solve_c(alpha, ll.normalizing_ell(model, "c"), n)
            z = np.array(_replicates(_rep_stable, (model, n, c_n), cfg.seed, gi, cfg.reps, cfg.workers))
            rows.append({**base, "mu": model.log_moments().mu, "c_n": c_n, "mean": z.mean(),
                         "ecf_distance": ll.ecf_distance(z, cf, STABLE_U_GRID),
                         "ecf_distance_reflected": ll.ecf_distance(-z, cf, STABLE_U_GRID),
                         "ks_reflected": ll.ks_statistic(-z, law.cdf), "error": ""})
        except (NumericError, DomainError, ValidationError) as exc:
            rows.append(_err_row(base, exc))
    return cols, rows, []


def _run_poisson(cfg, model):
    cols = ["t", "beta", "f1_minus_log_t", "lower_p", "upper_inv_t", "h", "q", "tail_draws",
            "empirical_tail", "reps", "mean_V", "V_ratio", "error"]
    rows = []
    mu = model.log_moments().mu
    for gi, t in enumerate(cfg.grid):
        base = {"t": t, "beta": cfg.beta, "reps": cfg.reps, "tail_draws": cfg.tail_draws}
        try:
            row = {**base, "f1_minus_log_t": pw.f_j_moment(1, t) - (math.log(t) if t > 0 else 0.0),
                   "h": pw.h_var(t), "upper_inv_t": 1.0 / t if t > 0 else float("inf"), "error": ""}
            if t > 1:
                row["lower_p"] = pw.poisson_lower_bound(t, cfg.beta)
                row["q"] = pw.poisson_deviation_bound(t, cfg.beta)
                draws = replicate_rng(cfg.seed, gi, _TAIL_STREAM).poisson(t, cfg.tail_draws)
                row["empirical_tail"] = float(np.mean(draws <= (1.0 - t ** -cfg.beta) * t))
            v = np.array(_replicates(_rep_poisson, (model, t), cfg.seed, gi, cfg.reps, cfg.workers))
            row["mean_V"] = v.mean()
            row["V_ratio"] = v.mean() / (0.5 * math.log(t) ** 2 / mu) if t > 1 else float("nan")
            rows.append(row)
        except (NumericError, DomainError, ValidationError) as exc:
            rows.append(_err_row(base, exc))
    return cols, rows, []


@dataclass
class IdentityReport:
    rows: List[Dict[str, Any]]
    failures: List[str]

    @property
    def ok(self) -> bool:
        return not self.failures


_IDENTITY_COLS = ["n", "reps", "max_residual", "max_bigint_residual", "mean_gap", "gap_ratio",
                  "lemma2_ratio", "status", "error"]


def verify_identity(cfg: ExperimentConfig) -> IdentityReport:
    """Check log T - log O = pittel_gap on every replicate of every grid point."""
    model = cfg.model_obj()
    rows, failures = [], []
    for gi, n in enumerate(cfg.grid):
        base = {"n": n, "reps": cfg.reps}
        try:
            res = _replicates(_rep_identity, (model, n), cfg.seed, gi, cfg.reps, cfg.workers)
            resid = np.array([r[3] for r in res])
            big = np.array([r[4] for r in res])
            gaps = np.array([r[2] for r in res])
            bad = [r for r in res if r[3] > IDENTITY_TOL or (not math.isnan(r[4]) and r[4] > IDENTITY_TOL)]
            failures.extend(f"n={n}: partition {'+'.join(map(str, r[5]))} residual {max(r[3], r[4]):.3g}"
                            for r in bad)
            L = math.log(n)
            rows.append({**base, "max_residual": float(resid.max()),
                         "max_bigint_residual": float(np.nanmax(big)) if n <= cs.BIGINT_ORDER_MAX_N else float("nan"),
                         "mean_gap": gaps.mean(),
                         "gap_ratio": gaps.mean() / L ** 1.5 if L > 0 else float("nan"),
                         "lemma2_ratio": gaps.mean() / (L * math.log(L) ** 2) if L > 1 else float("nan"),
                         "status": "fail" if bad else "ok", "error": ""})
        except (NumericError, DomainError, ValidationError) as exc:
            rows.append(_err_row(base, exc))
            failures.append(f"n={n}: {exc}")
    return IdentityReport(rows, failures)


def limits_table(cfg: ExperimentConfig) -> List[Dict[str, Any]]:
    model = cfg.model_obj()
    rows = []
    for n in cfg.grid:
        base = {"n": n, "log_n": math.log(n), "case": cfg.case}
        try:
            norm = ll.normalization(model, n, cfg.case)
            rows.append({**base, "b_n": norm.b_n, "a_n": norm.a_n,
                         "c_index": "" if norm.c_index is None else norm.c_index,
                         "c_value": "" if norm.c_value is None else norm.c_value, "error": ""})
        except (NumericError, DomainError, ValidationError) as exc:
            rows.append(_err_row(base, exc))
    return rows


def run(config: ExperimentConfig) -> ExperimentResult:
    config.validate()
    model = config.model_obj()
    start = time.perf_counter()
    if config.kind == "et-clt":
        cols, rows, summary = _run_et_clt(config, model)
    elif config.kind == "exact-oracle":
        cols, rows, summary = _run_exact(config, model)
    elif config.kind == "walk":
        cols, rows, summary = _run_walk(config, model)
    elif config.kind == "stable-input":
        cols, rows, summary = _run_stable(config, model)
    elif config.kind == "poisson":
        cols, rows, summary = _run_poisson(config, model)
    elif config.kind == "verify-identity":
        report = verify_identity(config)
        cols, rows, summary = _IDENTITY_COLS, report.rows, []
    else:
        cols = ["n", "log_n", "case", "b_n", "a_n", "c_index", "c_value", "error"]
        rows, summary = limits_table(config), []
    result = ExperimentResult(config, cols, rows, summary, time.perf_counter() - start)
    if config.out:
        write_csv(result, config.out)
    return result


# ---------------------------------------------------------------------------
# CSV


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return v


def format_csv(columns: Sequence[str], rows: Sequence[Dict[str, Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)  # RFC 4180: CRLF line ends, minimal quoting
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in columns])
    return buf.getvalue()


def write_rows(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(format_csv(columns, rows))


def write_csv(result: ExperimentResult, path) -> None:
    write_rows(path, result.columns, result.rows)
