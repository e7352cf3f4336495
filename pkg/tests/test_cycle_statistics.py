import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from stickperm.cycle_statistics import (
    SPF_LIMIT,
    PrimeSieve,
    d_stat,
    exact_order,
    get_sieve,
    log_order,
    log_T,
    pittel_gap,
    prime_exponent_profile,
    separable,
    stats_row,
)
from stickperm.errors import DomainError
from stickperm.factor_models import Beta, ParetoLog
from stickperm.partition_samplers import CyclePartition, sample_partition_thinning

SIGMA = CyclePartition.from_lengths([4, 3, 2])  # (1 9 6 2)(3 7 5)(4 8)

lengths_st = st.lists(st.integers(1, 5000), min_size=1, max_size=40)


def test_worked_example():
    assert log_order(SIGMA) == pytest.approx(math.log(12), abs=1e-15)
    assert log_T(SIGMA) == pytest.approx(math.log(24), abs=1e-15)
    assert pittel_gap(SIGMA) == pytest.approx(math.log(2), abs=1e-15)
    assert d_stat(SIGMA, 2) == 2
    assert d_stat(SIGMA, 5) == 0
    assert d_stat(SIGMA, 1) == 3
    assert exact_order(SIGMA) == 12


def test_trivial_partitions():
    ident = CyclePartition.identity(50)
    assert log_order(ident) == log_T(ident) == pittel_gap(ident) == 0.0
    assert log_order(CyclePartition(6, {6: 1})) == pytest.approx(math.log(6))


def test_separable():
    assert separable(SIGMA, lambda r: 1.0) == 3
    assert separable(SIGMA, math.log) == pytest.approx(log_T(SIGMA))
    p = CyclePartition(10, {1: 3, 2: 2, 3: 1})
    assert separable(p, lambda r: float(r == 1)) == 3


def test_d_stat_domain():
    with pytest.raises(DomainError):
        d_stat(SIGMA, 0)
    with pytest.raises(DomainError):
        d_stat(SIGMA, 10)


@given(lengths_st)
def test_order_against_bigint_lcm(lengths):
    p = CyclePartition.from_lengths(lengths)
    assert exact_order(p) == oracles.lcm_bigint(lengths)
    assert log_order(p) == pytest.approx(math.log(oracles.lcm_bigint(lengths)), abs=1e-9)


@given(lengths_st)
def test_pittel_identity_and_ordering(lengths):
    p = CyclePartition.from_lengths(lengths)
    lt, lo, gap = log_T(p), log_order(p), pittel_gap(p)
    assert lt >= lo - 1e-12
    assert abs(lt - lo - gap) < 1e-9


@settings(max_examples=60)
@given(st.lists(st.integers(1, 120), min_size=1, max_size=12))
def test_pittel_gap_against_prime_power_scan(lengths):
    p = CyclePartition.from_lengths(lengths)
    assert pittel_gap(p) == pytest.approx(oracles.pittel_gap_bruteforce(lengths), abs=1e-10)


@given(st.lists(st.integers(1, 3000), min_size=1, max_size=20), st.integers(1, 60))
def test_d_stat_direct_count(lengths, j):
    p = CyclePartition.from_lengths(lengths)
    if j > p.n:
        return
    assert d_stat(p, j) == sum(1 for r in lengths if r % j == 0)


@given(st.integers(1, 10 ** 6))
def test_factorize_small(r):
    assert get_sieve(10 ** 6).factorize(r) == oracles.trial_factor(r)


@settings(max_examples=40)
@given(st.integers(SPF_LIMIT + 1, 10 ** 12))
def test_factorize_beyond_table(r):
    f = get_sieve(10 ** 12).factorize(r)
    assert math.prod(p ** e for p, e in f.items()) == r
    assert f == oracles.trial_factor(r)


def test_factorize_large_prime_and_square():
    s = get_sieve(10 ** 13)
    big_prime = 999_999_999_989
    assert s.factorize(big_prime) == {big_prime: 1}
    assert s.factorize(1_000_003 ** 2) == {1_000_003: 2}
    with pytest.raises(DomainError):
        PrimeSieve(100).factorize(10_007 * 10_009)


def test_sieve_is_read_only():
    with pytest.raises(ValueError):
        get_sieve(1000).spf[10] = 3


def test_profile():
    assert prime_exponent_profile(CyclePartition.from_lengths([12, 18, 5])) == {2: 2, 3: 2, 5: 1}


@pytest.mark.parametrize("model", [Beta(1, 1), ParetoLog(1.5), Beta(0.5, 2)], ids=lambda m: m.spec)
def test_identity_on_random_partitions(model):
    g = np.random.default_rng(3)
    for n in (100, 10 ** 4):
        for _ in range(1000 if n == 100 else 300):
            p = sample_partition_thinning(model, n, g)
            lt, lo = log_T(p), log_order(p)
            assert abs(lt - lo - pittel_gap(p)) < 1e-9
            assert abs(lo - math.log(exact_order(p))) < 1e-9


def test_identity_at_large_n():
    g = np.random.default_rng(4)
    for _ in range(50):
        p = sample_partition_thinning(Beta(1, 1), 10 ** 8, g)
        assert abs(log_T(p) - log_order(p) - pittel_gap(p)) < 1e-9


def test_stats_row():
    row = stats_row(SIGMA)
    assert list(row) == ["n", "K_n", "logT", "logO", "gap"]
    assert row["n"] == 9 and row["K_n"] == 3


def test_divisor_count_excess_constant():
    # E (D_{n,j} - 1)^+ = O(log^2 n / j^2) with an unspecified constant: report the fitted one
    g = np.random.default_rng(12)
    fitted = {}
    for n in (10 ** 3, 10 ** 5):
        parts = [sample_partition_thinning(Beta(1, 1), n, g) for _ in range(2000)]
        excess = [np.mean([max(d_stat(p, j) - 1, 0) for p in parts]) for j in range(1, 60)]
        fitted[n] = max(j * j * e for j, e in enumerate(excess, 1)) / math.log(n) ** 2
    print("fitted constants:", {n: round(c, 3) for n, c in fitted.items()})
    assert all(0 < c < 2 for c in fitted.values())
