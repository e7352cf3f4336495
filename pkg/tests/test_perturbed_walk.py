import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

import oracles
from stickperm.errors import DomainError
from stickperm.factor_models import Beta, ParetoLog
from stickperm.limit_laws import ks_statistic, normal_cdf
from stickperm.partition_samplers import frequency_prefix
from stickperm.perturbed_walk import (
    WalkPath,
    conditional_mean_V,
    f_j_moment,
    h_var,
    integral_I,
    integral_J,
    m_at,
    n_at,
    poisson_deviation_bound,
    poisson_lower_bound,
    rho_at,
    sample_V,
    sample_V_given_frequencies,
    simulate_path,
)

HAND = WalkPath(xi=[1.0, 2.0, 1.0], eta=[0.5, 0.5, 0.5], mu=1.0, x_max=2.0)


def gen(seed=0):
    return np.random.default_rng(seed)


# --- paths and counting functions ------------------------------------------


def test_hand_path():
    assert HAND.S.tolist() == [0.0, 1.0, 3.0, 4.0]
    assert HAND.T.tolist() == [0.5, 1.5, 3.5]
    assert integral_J(HAND, 2.0) == pytest.approx(1.0, abs=1e-15)
    assert integral_J(HAND, 2.0) == pytest.approx(oracles.riemann_J(HAND.S, 1.0, 2.0, points=2_000_001), abs=1e-6)
    assert rho_at(HAND, 0.0) == 1 and rho_at(HAND, 1.0) == 2 and rho_at(HAND, 2.0) == 2
    assert n_at(HAND, 0.4) == 0 and n_at(HAND, 2.0) == 2


def test_zero_horizon():
    for model in (Beta(1, 1), ParetoLog(1.5)):
        path = simulate_path(model, 0.0, gen(1))
        assert path.K == 2  # first passage at k = 1, plus the extra step
        assert rho_at(path, 0.0) == 1
        assert integral_J(path, 0.0) == 0.0
        assert integral_I(path, 0.0, model) == 0.0


def test_horizon_checks():
    with pytest.raises(DomainError):
        rho_at(HAND, 2.5)
    with pytest.raises(DomainError):
        simulate_path(Beta(1, 1), -1.0, gen())
    with pytest.raises(DomainError):
        WalkPath([1.0], [0.1], 1.0, x_max=5.0)


def test_mean_path_length_uniform():
    x, reps = 50.0, 4000
    g = gen(2)
    k = np.array([simulate_path(Beta(1, 1), x, g).K for _ in range(reps)])
    assert abs(k.mean() - (x + 2)) < 3 * k.std(ddof=1) / math.sqrt(reps)


def test_paretolog_path_length_bound():
    g = gen(3)
    for x in (0.0, 3.3, 40.0):
        for _ in range(200):
            path = simulate_path(ParetoLog(1.5), x, g)
            assert path.K <= x + 2
            assert path.S[-2] > x and path.S[-1] > x


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), x=st.floats(0, 60))
def test_path_invariants(seed, x):
    model = Beta(0.8, 1.7)
    path = simulate_path(model, x, gen(seed))
    assert np.all(np.diff(path.S) > 0)
    assert np.all(path.T >= path.S[:-1])
    assert path.S[-1] > x
    ys = np.linspace(0, x, 13)
    assert np.all(n_at(path, ys) <= rho_at(path, ys))
    for y in ys:
        assert 0 <= m_at(path, y, model) <= rho_at(path, y)


def test_expected_rho_uniform():
    # with S_0 counted, E rho(x) = 1 + E Poisson(x) = x + 1
    x, reps = 100.0, 10_000
    g = gen(4)
    r = np.array([rho_at(simulate_path(Beta(1, 1), x, g), x) for _ in range(reps)])
    assert abs(r.mean() - (x + 1)) < 3 * r.std(ddof=1) / math.sqrt(reps)


def test_m_has_the_mean_of_n():
    # M is the compensator of N: E N(x) = E M(x)
    g = gen(5)
    model = Beta(2, 3)
    reps = 20_000
    ns, ms = [], []
    for _ in range(reps):
        p = simulate_path(model, 8.0, g)
        ns.append(n_at(p, 8.0))
        ms.append(m_at(p, 8.0, model))
    ns, ms = np.array(ns), np.array(ms)
    assert abs(ns.mean() - ms.mean()) < 3 * (ns - ms).std(ddof=1) / math.sqrt(reps)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), x=st.floats(0.5, 25))
def test_integrals_against_riemann(seed, x):
    model = Beta(2, 3)
    path = simulate_path(model, x, gen(seed))
    mu = model.log_moments().mu
    assert integral_J(path, x) == pytest.approx(oracles.riemann_J(path.S, mu, x), abs=2e-4 * (1 + x))
    fine = np.linspace(0, x, 20_001)
    rstar = integrate.cumulative_trapezoid(model.eta_tail(fine), fine, initial=0.0)
    comp = lambda y: (y - np.interp(y, fine, rstar)) / mu
    ref = oracles.riemann_counting_integral(path.T, x, comp, grid=20_001)
    assert integral_I(path, x, model) == pytest.approx(ref, abs=1e-3 * (1 + x))


@pytest.mark.slow
def test_J_variance_near_one_third():
    x, reps = 1e4, 3000
    g = gen(6)
    j = np.array([integral_J(simulate_path(Beta(1, 1), x, g), x) for _ in range(reps)]) / x ** 1.5
    assert 0.30 <= j.var(ddof=1) <= 0.37
    assert ks_statistic(j * math.sqrt(3), normal_cdf) < 0.04


# --- poissonization ---------------------------------------------------------


def test_f_j_examples():
    assert f_j_moment(1, 0.0) == 0.0
    assert f_j_moment(2, 0.0) == 0.0
    for t in (0.5, 3.0, 40.0):
        k = np.arange(0, 400)
        p = stats.poisson.pmf(k, t)
        lk = np.log(np.maximum(k, 1))
        assert f_j_moment(1, t) == pytest.approx(float(np.sum(p * lk)), rel=1e-12)
        assert f_j_moment(2, t) == pytest.approx(float(np.sum(p * lk ** 2)), rel=1e-12)
    with pytest.raises(DomainError):
        f_j_moment(3, 1.0)


@pytest.mark.parametrize("t", np.geomspace(10, 1e6, 13))
def test_f1_upper_bound(t):
    assert f_j_moment(1, t) - math.log(t) <= 1 / t


@pytest.mark.parametrize("t", [10.0, 100.0, 1000.0])
def test_f1_lower_bound(t):
    assert poisson_lower_bound(t, 0.25) <= f_j_moment(1, t) - math.log(t)


def test_h_decays():
    assert h_var(100.0) < h_var(10.0)
    assert h_var(1e6) < 1e-5
    assert h_var(30.0) == pytest.approx(f_j_moment(2, 30.0) - f_j_moment(1, 30.0) ** 2, rel=1e-9)


def test_q_range():
    for t in np.geomspace(1.01, 1e7, 30):
        for beta in (0.1, 0.25, 0.45):
            assert 0 < poisson_deviation_bound(t, beta) < 1 or poisson_deviation_bound(t, beta) == 0.0
    with pytest.raises(DomainError):
        poisson_deviation_bound(1.0, 0.25)
    with pytest.raises(DomainError):
        poisson_deviation_bound(10.0, 0.5)


def test_q_dominates_poisson_tail():
    t, beta = 1e4, 0.25
    draws = gen(7).poisson(t, 1_000_000)
    emp = np.mean(draws <= (1 - t ** -beta) * t)
    assert emp <= poisson_deviation_bound(t, beta)
    # against the exact lower tail as well
    assert stats.poisson.cdf(math.floor((1 - t ** -beta) * t), t) <= poisson_deviation_bound(t, beta)


def test_q_exponent_rate():
    # eps + (1 - eps) log(1 - eps) = eps^2 / 2 + O(eps^3), so -log q ~ t^{1 - 2 beta} / 2
    beta = 0.25
    r = [-math.log(poisson_deviation_bound(t, beta)) / t ** (1 - 2 * beta) for t in (1e2, 1e4, 1e6)]
    assert r[0] > r[1] > r[2]
    for t, ri in zip((1e2, 1e4, 1e6), r):
        eps = t ** -beta
        assert abs(ri - (0.5 + eps / 6)) < eps ** 2


def test_V_zero():
    g = gen(8)
    assert sample_V(Beta(1, 1), 0.0, g) == 0.0


def test_harmonic_log_oracle():
    n = np.array([1, 7, 999, 1000, 1001, 5000])
    direct = [sum(math.log(r) / r for r in range(1, k + 1)) for k in n]
    assert np.allclose(oracles.harmonic_log(n), direct, rtol=0, atol=1e-10)


def test_V_mean_trend():
    # the exact mean ratio rises to 1; the simulated means track it within 3 SE
    g = gen(9)
    exact = []
    for t in (1e3, 1e5, 1e7):
        v = np.array([sample_V(Beta(1, 1), t, g) for _ in range(10_000)])
        ev = oracles.uniform_mean_V(t)
        assert abs(v.mean() - ev) < 3 * v.std(ddof=1) / math.sqrt(v.size)
        exact.append(ev / (0.5 * math.log(t) ** 2))
    assert exact[0] < exact[1] < exact[2] < 1


def test_V_conditional_mean_identity():
    g = gen(10)
    t = 200.0
    freqs = frequency_prefix(Beta(1, 1), 60, g)
    freqs = freqs[t * freqs >= 1e-6]
    v = np.array([sample_V_given_frequencies(freqs, t, g) for _ in range(10_000)])
    assert abs(v.mean() - conditional_mean_V(freqs, t)) < 3 * v.std(ddof=1) / math.sqrt(v.size)
