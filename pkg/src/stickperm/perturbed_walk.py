"""Perturbed random walks built from (xi, eta) = (|log W|, |log(1 - W)|).

S_k = xi_1 + ... + xi_k (S_0 = 0) is the walk and T_k = S_{k-1} + eta_k the
perturbed sites.  The counting functions are

    rho(x) = #{k >= 0 : S_k <= x},   N(x) = #{k >= 1 : T_k <= x},
    M(x)   = sum_{k >= 0} F(x - S_k),   F the CDF of eta,

and the integral functionals (unnormalized)

    J(x) = int_0^x (rho(y) - y/mu) dy,
    I(x) = int_0^x (N(y) - (y - r_star(y))/mu) dy.

The step-function parts are integrated exactly, e.g. int_0^x rho = sum (x - S_k)
over S_k <= x; the smooth part of I reduces to ``model.r_integral(x)``.

The second half of the module covers the poissonized occupancy model:
V(t) = log T_{pi_t} with pi_t ~ Poisson(t).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .cycle_statistics import log_T
from .errors import DomainError
from .factor_models import FactorModel
from .partition_samplers import sample_partition_thinning

__all__ = [
    "WalkPath",
    "simulate_path",
    "rho_at",
    "n_at",
    "m_at",
    "integral_I",
    "integral_J",
    "f_j_moment",
    "h_var",
    "sample_V",
    "sample_V_given_frequencies",
    "conditional_mean_V",
    "poisson_deviation_bound",
    "poisson_lower_bound",
    "stable_walk_statistic",
]


@dataclass
class WalkPath:
    xi: np.ndarray
    eta: np.ndarray
    mu: float
    x_max: Optional[float] = None
    S: np.ndarray = field(init=False, repr=False)
    T: np.ndarray = field(init=False, repr=False)
    _T_sorted: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float)
        self.eta = np.asarray(self.eta, dtype=float)
        if self.xi.shape != self.eta.shape or self.xi.size == 0:
            raise DomainError("xi and eta must be nonempty and of equal length")
        if np.any(self.xi <= 0) or np.any(self.eta < 0):
            raise DomainError("need xi > 0 and eta >= 0")
        self.S = np.concatenate([[0.0], np.cumsum(self.xi)])
        self.T = self.S[:-1] + self.eta
        self._T_sorted = np.sort(self.T)
        if self.x_max is None:
            self.x_max = float(self.S[-1])
        elif not self.S[-1] > self.x_max:
            raise DomainError("path must reach beyond its horizon")

    @property
    def K(self) -> int:
        return self.xi.size

    def _check(self, x):
        if np.any(np.asarray(x) < 0) or np.any(np.asarray(x) > self.x_max):
            raise DomainError(f"x outside [0, {self.x_max}]")


def simulate_path(model: FactorModel, x_max: float, gen: np.random.Generator) -> WalkPath:
    """Path up to the first k with S_k > x_max, plus one extra step."""
    if x_max < 0:
        raise DomainError("x_max must be nonnegative")
    mu = model.log_moments().mu
    chunk = int(x_max / mu * 1.05 + 5 * math.sqrt(x_max / mu + 1)) + 8
    xis, etas, total = [], [], 0.0
    while True:
        xi, eta = model.sample_logs(gen, chunk)
        S = total + np.cumsum(xi)
        hit = np.flatnonzero(S > x_max)
        if hit.size and hit[0] + 2 <= chunk:
            k = hit[0] + 2
            xis.append(xi[:k])
            etas.append(eta[:k])
            break
        xis.append(xi)
        etas.append(eta)
        total = S[-1]
    return WalkPath(np.concatenate(xis), np.concatenate(etas), mu, float(x_max))


def rho_at(path: WalkPath, x):
    path._check(x)
    return np.searchsorted(path.S, x, side="right")[()]


def n_at(path: WalkPath, x):
    path._check(x)
    return np.searchsorted(path._T_sorted, x, side="right")[()]


def m_at(path: WalkPath, x: float, model: FactorModel) -> float:
    path._check(x)
    s = path.S[path.S <= x]
    return float(np.sum(1.0 - np.asarray(model.eta_tail(x - s))))


def integral_J(path: WalkPath, x: float) -> float:
    path._check(x)
    s = path.S[path.S <= x]
    return float(np.sum(x - s) - 0.5 * x * x / path.mu)


def integral_I(path: WalkPath, x: float, model: FactorModel) -> float:
    path._check(x)
    t = path._T_sorted[path._T_sorted <= x]
    return float(np.sum(x - t) - (0.5 * x * x - model.r_integral(x)) / path.mu)


def stable_walk_statistic(model: FactorModel, n: int, c_n: float, gen: np.random.Generator,
                          chunk: int = 1 << 20) -> float:
    """``(S_n - n mu) / c_n`` for one walk of n steps."""
    mu = model.log_moments().mu
    total, left = 0.0, n
    while left:
        k = min(left, chunk)
        xi, _ = model.sample_logs(gen, k)
        total += float(np.sum(xi - mu))
        left -= k
    return total / c_n


# ---------------------------------------------------------------------------
# poissonization


def _poisson_window(t):
    if t <= 0:
        return np.zeros(1, dtype=np.int64), np.ones(1)
    sd = math.sqrt(t)
    lo = max(0, int(t - 14 * sd - 30))
    hi = int(t + 14 * sd + 40)
    k = np.arange(lo, hi + 1)
    p = stats.poisson.pmf(k, t)
    keep = p > 1e-16 * p.max()
    return k[keep], p[keep]


def f_j_moment(j: int, t: float) -> float:
    """``E (log^+ pi_t)^j`` for pi_t ~ Poisson(t), j in {1, 2}."""
    if j not in (1, 2):
        raise DomainError("j must be 1 or 2")
    if t < 0:
        raise DomainError("t must be nonnegative")
    k, p = _poisson_window(t)
    lk = np.log(np.maximum(k, 1))
    return math.fsum(p * lk ** j)


def h_var(t: float) -> float:
    """Var(log^+ pi_t), summed as centered squares."""
    k, p = _poisson_window(t)
    lk = np.log(np.maximum(k, 1))
    m = math.fsum(p * lk)
    return math.fsum(p * (lk - m) ** 2)


def poisson_deviation_bound(t: float, beta: float) -> float:
    """``q(t) = exp(-t (eps + (1 - eps) log(1 - eps)))`` with eps = t**-beta."""
    if not t > 1:
        raise DomainError(f"t must exceed 1, got {t}")
    if not 0 < beta < 0.5:
        raise DomainError(f"beta must lie in (0, 1/2), got {beta}")
    eps = t ** -beta
    return math.exp(-t * (eps + (1.0 - eps) * math.log1p(-eps)))


def poisson_lower_bound(t: float, beta: float) -> float:
    """``p(t) = log(1 - eps) P{pi_t > (1 - eps) t} - q(t) log t``, a lower bound for f_1(t) - log t."""
    eps = t ** -beta
    upper_tail = stats.poisson.sf(math.floor((1.0 - eps) * t), t)
    return math.log1p(-eps) * upper_tail - poisson_deviation_bound(t, beta) * math.log(t)


def sample_V(model: FactorModel, t: float, gen: np.random.Generator) -> float:
    if t < 0:
        raise DomainError("t must be nonnegative")
    balls = int(gen.poisson(t)) if t > 0 else 0
    if balls == 0:
        return 0.0
    return log_T(sample_partition_thinning(model, balls, gen))


def sample_V_given_frequencies(freqs, t: float, gen: np.random.Generator) -> float:
    """V(t) for fixed box frequencies: box counts are independent Poisson(t P_j)."""
    counts = gen.poisson(t * np.asarray(freqs, dtype=float))
    occupied = counts[counts > 1]
    return float(np.sum(np.log(occupied)))


def conditional_mean_V(freqs, t: float) -> float:
    """``sum_j f_1(t P_j)``."""
    return math.fsum(f_j_moment(1, t * p) for p in np.asarray(freqs, dtype=float))
