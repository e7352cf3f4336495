import csv
import io
import math
import subprocess
import sys

import numpy as np
import pytest

from stickperm.cli import main
from stickperm.errors import ValidationError
from stickperm.experiment import (
    ExperimentConfig,
    check_identity,
    format_csv,
    replicate_rng,
    run,
    verify_identity,
)
from stickperm.limit_laws import normalization
from stickperm.factor_models import parse_model
from stickperm.partition_samplers import CyclePartition


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


# --- config -----------------------------------------------------------------


def test_config_from_file(tmp_path):
    p = tmp_path / "exp.cfg"
    p.write_text("# et-clt smoke run\nkind = et-clt\nmodel = beta:1,1\ngrid = 1e2, 1e3\n"
                 "reps = 50  # small\nseed = 12345678901234567890\n")
    cfg = ExperimentConfig.from_file(p)
    assert cfg.grid == (100, 1000) and cfg.reps == 50 and cfg.seed == 12345678901234567890
    assert ExperimentConfig.from_file(p, reps=7).reps == 7


@pytest.mark.parametrize("bad", [
    dict(reps=0),
    dict(grid="100,10"),
    dict(grid=""),
    dict(grid="1.5"),
    dict(case="c"),
    dict(model="paretolog:1.5"),
    dict(kind="nope"),
    dict(seed=2 ** 64),
    dict(workers=0),
    dict(bogus=1),
])
def test_config_validation(bad):
    base = dict(kind="et-clt", model="beta:1,1", grid="100,1000", reps=10)
    base.update(bad)
    with pytest.raises(ValidationError):
        ExperimentConfig.from_mapping(base)


def test_config_missing_key(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("kind = walk\ngrid = 10\n")
    with pytest.raises(ValidationError):
        ExperimentConfig.from_file(p)
    p.write_text("kind walk\n")
    with pytest.raises(ValidationError):
        ExperimentConfig.from_file(p)


def test_kind_specific_validation():
    with pytest.raises(ValidationError):
        ExperimentConfig.from_mapping(dict(kind="exact-oracle", model="beta:1,1", grid="31"))
    with pytest.raises(ValidationError):
        ExperimentConfig.from_mapping(dict(kind="stable-input", model="beta:1,1", grid="100"))
    with pytest.raises(ValidationError):
        ExperimentConfig.from_mapping(dict(kind="poisson", model="beta:1,1", grid="10", beta=0.5))


# --- seeds ------------------------------------------------------------------


def test_replicate_streams_are_distinct_and_stable():
    a = replicate_rng(5, 0, 0).random(4)
    assert np.array_equal(a, replicate_rng(5, 0, 0).random(4))
    others = [replicate_rng(5, 0, 1), replicate_rng(5, 1, 0), replicate_rng(6, 0, 0)]
    assert all(not np.array_equal(a, g.random(4)) for g in others)


# --- runs -------------------------------------------------------------------


def test_et_clt_rows_and_constants():
    cfg = ExperimentConfig.from_mapping(dict(kind="et-clt", model="beta:1,1", grid="100,1e4", reps=200, seed=3))
    res = run(cfg)
    assert len(res.rows) == 2 and res.ok
    for r in res.rows:
        norm = normalization(parse_model("beta:1,1"), r["n"], "a")
        assert r["b_n"] == norm.b_n and r["a_n"] == norm.a_n
        assert r["max_identity_residual"] < 1e-9
        assert 0 <= r["ks_logT"] <= 1
    assert "SeedSequence(3" in res.seed_provenance


def test_et_clt_stats_out(tmp_path):
    out = tmp_path / "stats.csv"
    cfg = ExperimentConfig.from_mapping(dict(kind="et-clt", model="beta:2,1", grid="50", reps=20, stats_out=str(out)))
    run(cfg)
    got = rows(out.read_text())
    assert len(got) == 20 and list(got[0]) == ["n", "K_n", "logT", "logO", "gap"]


def test_exact_oracle_run(tmp_path):
    law_out = tmp_path / "law.csv"
    cfg = ExperimentConfig.from_mapping(dict(kind="exact-oracle", model="beta:1,1", grid="6", reps=3000,
                                             seed=1, law_out=str(law_out)))
    res = run(cfg)
    r = res.rows[0]
    assert r["cells"] == 11 and r["min_p"] > 1e-3
    assert law_out.read_text().startswith("partition,probability")


def test_walk_run_columns():
    cfg = ExperimentConfig.from_mapping(dict(kind="walk", model="beta:1,1", grid="5,20", reps=30, seed=2))
    res = run(cfg)
    assert res.columns == ["x", "replicate", "rho", "N", "M", "I_norm", "J_norm"]
    assert len(res.rows) == 60 and len(res.summary) == 2
    assert [r["replicate"] for r in res.rows[:30]] == list(range(30))


def test_stable_input_run():
    cfg = ExperimentConfig.from_mapping(dict(kind="stable-input", model="paretolog:1.5", grid="1000", reps=300, seed=4))
    r = run(cfg).rows[0]
    assert r["c_n"] == pytest.approx(100.0)
    assert r["ecf_distance_reflected"] < r["ecf_distance"]


def test_poisson_run():
    cfg = ExperimentConfig.from_mapping(dict(kind="poisson", model="beta:1,1", grid="10,100", reps=50,
                                             tail_draws=10_000, seed=5))
    for r in run(cfg).rows:
        assert r["lower_p"] <= r["f1_minus_log_t"] <= r["upper_inv_t"]
        assert r["empirical_tail"] <= r["q"]


def test_partial_failure_rows():
    # log n < 1 leaves case c without a c-index; the other grid point still runs
    cfg = ExperimentConfig.from_mapping(dict(kind="limits", model="paretolog:1.5", case="c", grid="2,1e4"))
    res = run(cfg)
    assert res.rows[0]["error"].startswith("DomainError")
    assert res.rows[1]["error"] == "" and res.rows[1]["c_index"] == 9
    assert not res.ok


def test_replay_is_byte_identical(tmp_path):
    for kind, model, grid in (("et-clt", "beta:1,1", "100,1000"), ("walk", "beta:2,1", "3,30"),
                              ("verify-identity", "paretolog:1.5", "500")):
        texts = []
        for i, workers in enumerate((1, 1, 3)):
            out = tmp_path / f"{kind}{i}.csv"
            cfg = ExperimentConfig.from_mapping(dict(kind=kind, model=model, grid=grid, reps=40, seed=99,
                                                     workers=workers, out=str(out)))
            run(cfg)
            texts.append(out.read_bytes())
        assert texts[0] == texts[1] == texts[2]
        assert b"\r\n" in texts[0]


def test_csv_quoting():
    text = format_csv(["a", "b"], [{"a": "x,y", "b": 0.1}])
    assert text == 'a,b\r\n"x,y",0.1\r\n'


# --- identity verification --------------------------------------------------


def test_identity_permutations_have_no_gap():
    for n in (1, 10, 1000):
        lt, lo, gap, resid, big = check_identity(CyclePartition.identity(n))
        assert lt == lo == gap == resid == 0.0 and big == 0.0


def test_verify_identity_report():
    cfg = ExperimentConfig.from_mapping(dict(kind="verify-identity", model="beta:1,1", grid="1e3,1e4", reps=500, seed=8))
    rep = verify_identity(cfg)
    assert rep.ok and not rep.failures
    assert all(r["max_residual"] < 1e-9 and r["max_bigint_residual"] < 1e-9 for r in rep.rows)


def test_gap_over_lemma_normalizer_stays_bounded():
    # mean gap ~ const * L (log L)^2 with L = log n, so gap / log^{3/2} n only turns down once log L > 4
    cfg = ExperimentConfig.from_mapping(dict(kind="verify-identity", model="beta:1,1", grid="1e3,1e4,1e5",
                                             reps=2000, seed=10))
    rep = verify_identity(cfg)
    lemma = [r["lemma2_ratio"] for r in rep.rows]
    assert max(lemma) / min(lemma) < 1.25
    assert all(r["gap_ratio"] < 1 for r in rep.rows)


@pytest.mark.xfail(strict=True, reason="gap / log^{3/2} n still increases for n <= 1e5; see notes")
def test_gap_ratio_decreasing_literal():
    cfg = ExperimentConfig.from_mapping(dict(kind="verify-identity", model="beta:1,1", grid="1e3,1e4,1e5",
                                             reps=2000, seed=10))
    g = [r["gap_ratio"] for r in verify_identity(cfg).rows]
    assert g[0] > g[1] > g[2]


# --- CLI --------------------------------------------------------------------


def test_cli_limits_stdout(capsys):
    assert main(["limits", "--model", "beta:1,1", "--grid", "100,1e4"]) == 0
    out = rows(capsys.readouterr().out)
    assert [r["n"] for r in out] == ["100", "10000"]
    L = math.log(100)
    assert float(out[0]["b_n"]) == pytest.approx(0.5 * L * L - L + 1 - 0.01)


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["simulate", "--model", "paretolog:1.5", "--case", "a", "--grid", "100"]) == 1
    assert main(["simulate", "--model", "beta:1,1", "--grid", "100", "--reps", "0"]) == 1
    assert main(["simulate", "--model", "nope:1", "--grid", "100"]) == 1
    assert main(["limits", "--model", "paretolog:1.5", "--case", "c", "--grid", "2,100"]) == 2
    out = tmp_path / "v.csv"
    assert main(["verify-identity", "--model", "beta:1,1", "--grid", "200", "--reps", "20", "--out", str(out)]) == 0
    assert rows(out.read_text())[0]["status"] == "ok"


def test_cli_config_file_with_override(tmp_path, capsys):
    cfg = tmp_path / "w.cfg"
    cfg.write_text("model = beta:1,1\ngrid = 4\nreps = 5\nseed = 1\n")
    assert main(["walk", "--config", str(cfg), "--reps", "3"]) == 0
    assert len(rows(capsys.readouterr().out)) == 3


def test_cli_module_entry(tmp_path):
    out = tmp_path / "e.csv"
    proc = subprocess.run([sys.executable, "-m", "stickperm", "exact", "--model", "beta:2,1", "--grid", "5",
                           "--reps", "2000", "--seed", "3", "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert float(rows(out.read_text())[0]["min_p"]) > 1e-3
