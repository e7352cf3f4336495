"""Centering/scaling sequences, the limiting stable law, and goodness-of-fit tools.

Three normalization regimes for ``(log O_n - b_n) / a_n`` (equally ``log T_n``):

* ``a``: Var log W finite, normal limit, ``a_n^2 = sigma2 log^3 n / (3 mu^3)``;
* ``b``: infinite variance with slowly varying truncated second moment, normal limit;
* ``c``: P{|log W| > x} regularly varying with index alpha in (1, 2), stable limit.

All logarithms are natural.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy import integrate, interpolate, optimize, special, stats

from .errors import DomainError, NumericError, ValidationError
from .factor_models import Ell, FactorModel, ParetoLog, RegVar

__all__ = [
    "LimitNormalization",
    "StableLaw",
    "get_stable_law",
    "centering_b",
    "scaling_a",
    "normalization",
    "normalizing_ell",
    "walk_scale",
    "solve_c",
    "gamma_one_minus",
    "stable_cf",
    "stable_cdf",
    "integrated_levy_cf",
    "normal_cdf",
    "ks_statistic",
    "chi_square",
    "chi_square_two_sample",
    "ecf_distance",
    "standardize",
    "target_cdf",
]

CASES = ("a", "b", "c")


@dataclass(frozen=True)
class LimitNormalization:
    case_tag: str
    b_n: float
    a_n: float
    alpha: Optional[float] = None
    c_index: Optional[int] = None
    c_value: Optional[float] = None


def centering_b(model: FactorModel, n: float) -> float:
    """``b_n = (log^2 n / 2 - int_0^{log n} r_star(z) dz) / mu``."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    mu = model.log_moments().mu
    if not math.isfinite(mu):
        raise ValidationError(f"centering needs finite mu; {model.spec} has mu = inf")
    L = math.log(n)
    if L == 0.0:
        return 0.0
    return (0.5 * L * L - model.r_integral(L)) / mu


def normalizing_ell(model: FactorModel, case_tag: str) -> Ell:
    """Slowly varying function entering the c-sequence for cases b and c."""
    tail = model.tail_class
    if case_tag == "c":
        if isinstance(tail, RegVar) and 1 < tail.alpha < 2:
            return tail.ell
        raise ValidationError(f"case c needs a regularly varying tail with alpha in (1, 2); {model.spec} has {tail}")
    if case_tag == "b":
        # tail x^-2 * const gives truncated second moment ~ 2 const log x
        if isinstance(model, ParetoLog) and model.alpha == 2.0:
            return Ell(2.0 * tail.ell.const, 1.0)
        raise ValidationError(f"case b is only wired for paretolog:2, got {model.spec}")
    raise ValidationError(f"no slowly varying normalizer for case {case_tag!r}")


def _validate_case(model: FactorModel, case_tag: str):
    if case_tag not in CASES:
        raise ValidationError(f"case must be one of {CASES}, got {case_tag!r}")
    mom = model.log_moments()
    if not mom.mu_finite:
        raise ValidationError(f"{model.spec} has infinite mu; no normalization applies")
    if case_tag == "a" and not mom.sigma2_finite:
        raise ValidationError(f"case a needs finite sigma2; {model.spec} has sigma2 = inf")
    if case_tag in ("b", "c") and mom.sigma2_finite:
        raise ValidationError(f"case {case_tag} needs infinite sigma2; {model.spec} has sigma2 = {mom.sigma2:g}")
    if case_tag in ("b", "c"):
        normalizing_ell(model, case_tag)
    return mom


def solve_c(alpha: float, ell: Ell, m: float) -> float:
    """Root c of ``m * ell(c) / c**alpha = 1`` (the larger root for log-power ell)."""
    if not 1 < alpha <= 2:
        raise DomainError(f"alpha must lie in (1, 2], got {alpha}")
    if m <= 0:
        raise DomainError(f"m must be positive, got {m}")
    if ell.is_constant:
        return (m * ell.const) ** (1.0 / alpha)
    p, logk = ell.power, math.log(ell.const)
    # in y = log c: g(y) = alpha*y - log m - log k - p log y, increasing for y > p/alpha
    def g(y):
        return alpha * y - math.log(m) - logk - p * math.log(y)

    lo = p / alpha
    if g(lo) >= 0:
        raise DomainError(f"m * ell(c) / c^alpha = 1 has no root on the increasing branch for m={m}")
    hi = max(2 * lo, 1.0)
    while g(hi) <= 0:
        hi *= 2
    y = optimize.brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    c = math.exp(y)
    if abs(m * ell(c) / c ** alpha - 1) > 1e-10:
        raise NumericError("solve_c residual too large", abs(m * ell(c) / c ** alpha - 1))
    return c


def _c_sequence(model, case_tag, m):
    alpha = 2.0 if case_tag == "b" else model.tail_class.alpha
    return alpha, solve_c(alpha, normalizing_ell(model, case_tag), m)


def scaling_a(model: FactorModel, n: float, case_tag: str) -> float:
    mom = _validate_case(model, case_tag)
    L = math.log(n)
    mu = mom.mu
    if case_tag == "a":
        return math.sqrt(mom.sigma2 * L ** 3 / (3.0 * mu ** 3))
    m = math.floor(L)
    if m < 1:
        raise DomainError(f"cases b and c need log n >= 1, got n={n}")
    alpha, c = _c_sequence(model, case_tag, m)
    if case_tag == "b":
        return c * L / math.sqrt(3.0 * mu ** 3)
    return ((alpha + 1.0) * mu ** (alpha + 1.0)) ** (-1.0 / alpha) * c * L


def normalization(model: FactorModel, n: float, case_tag: str) -> LimitNormalization:
    a_n = scaling_a(model, n, case_tag)
    b_n = centering_b(model, n)
    if case_tag == "a":
        return LimitNormalization("a", b_n, a_n)
    m = math.floor(math.log(n))
    alpha, c = _c_sequence(model, case_tag, m)
    return LimitNormalization(case_tag, b_n, a_n, alpha if case_tag == "c" else None, m, c)


def walk_scale(model: FactorModel, x: float, case_tag: str) -> float:
    """Scale c(x) of the renewal fluctuation rho(x) - x/mu.

    Chosen so that ``a_n = k * walk_scale(log n) * log n`` with k = 3**-0.5 in
    cases a/b and (alpha+1)**(-1/alpha) in case c.
    """
    mom = _validate_case(model, case_tag)
    mu = mom.mu
    if case_tag == "a":
        return math.sqrt(mom.sigma2 * x / mu ** 3)
    alpha, c = _c_sequence(model, case_tag, math.floor(x))
    if case_tag == "b":
        return c / mu ** 1.5
    return c * mu ** (-(alpha + 1.0) / alpha)


# ---------------------------------------------------------------------------
# stable law


def gamma_one_minus(alpha: float) -> float:
    """Gamma(1 - alpha) through the reflection formula; negative for alpha in (1, 2)."""
    return math.pi / (special.gamma(alpha) * math.sin(math.pi * alpha))


def stable_cf(alpha: float, u):
    """``exp{-|u|^alpha Gamma(1-alpha) (cos(pi alpha/2) + i sin(pi alpha/2) sgn u)}``."""
    if not 1 < alpha < 2:
        raise DomainError(f"alpha must lie in (1, 2), got {alpha}")
    u = np.asarray(u, dtype=float)
    g = gamma_one_minus(alpha)
    expo = -np.abs(u) ** alpha * g * (math.cos(math.pi * alpha / 2) + 1j * math.sin(math.pi * alpha / 2) * np.sign(u))
    return np.exp(expo)[()]


def _gauss_panels(edges, order):
    t, w = np.polynomial.legendre.leggauss(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (hi - lo) * t + 0.5 * (hi + lo)).ravel()
    weights = (0.5 * (hi - lo) * w).ravel()
    return nodes, weights


@dataclass
class StableLaw:
    """Law with characteristic function ``stable_cf(alpha, .)``.

    The CDF is the Gil-Pelaez integral ``1/2 - (1/pi) int_0^U Im(e^{-iux} phi(u)) / u du``
    on Gauss-Legendre panels, truncated where ``|phi(U)| < 1e-8``.  Large
    batches inside ``table_range`` go through a cubic Hermite table built from
    the same integrals (CDF and density at spacing ``table_step``).
    """

    alpha: float
    cf_cutoff: float = 1e-8
    panel_width: float = 0.02
    order: int = 16
    table_range: tuple = (-100.0, 16.0)
    table_step: float = 0.02
    table_far: float = -1e4
    _grid: dict = field(default_factory=dict, init=False, repr=False)
    _table: Optional[interpolate.CubicHermiteSpline] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if not 1 < self.alpha < 2:
            raise DomainError(f"alpha must lie in (1, 2), got {self.alpha}")
        a = self.alpha
        self.scale_alpha = gamma_one_minus(a) * math.cos(math.pi * a / 2)  # |phi(u)| = exp(-scale_alpha |u|^a)
        self.u_max = (math.log(1.0 / self.cf_cutoff) / self.scale_alpha) ** (1.0 / a)
        self._nodes(self.panel_width)
        # cross-check the panel rule against a lower order on a probe grid
        probe = np.linspace(-40, 40, 81)
        coarse = self._cdf_on(probe, self.panel_width, order=self.order - 4)
        fine = self._cdf_on(probe, self.panel_width)
        if np.max(np.abs(coarse - fine)) > 1e-9:
            raise NumericError("stable CDF quadrature not converged", float(np.max(np.abs(coarse - fine))))

    @property
    def scale(self) -> float:
        """Scale parameter in the usual S1 parametrization (skewness -1)."""
        return self.scale_alpha ** (1.0 / self.alpha)

    def cf(self, u):
        return stable_cf(self.alpha, u)

    def _nodes(self, width, order=None):
        order = order or self.order
        key = (width, order)
        if key not in self._grid:
            n_uniform = max(1, math.ceil(self.u_max / width))
            first = self.u_max / n_uniform
            graded = first * 2.0 ** -np.arange(40, 0, -1)
            edges = np.concatenate([[0.0], graded, first * np.arange(1, n_uniform + 1)])
            u, w = _gauss_panels(edges, order)
            phi = self.cf(u)
            self._grid[key] = (u, w / u, phi)
        return self._grid[key]

    def _cdf_on(self, x, width, order=None):
        u, wu, phi = self._nodes(width, order)
        out = np.empty(len(x))
        for s in range(0, len(x), 256):
            xs = x[s:s + 256]
            im = np.imag(np.exp(-1j * np.outer(xs, u)) * phi)
            out[s:s + 256] = 0.5 - (im @ wu) / math.pi
        return out

    def _pdf_on(self, x, width):
        u, wu, phi = self._nodes(width)
        w = wu * u
        out = np.empty(len(x))
        for s in range(0, len(x), 256):
            xs = x[s:s + 256]
            out[s:s + 256] = np.real(np.exp(-1j * np.outer(xs, u)) * phi) @ w / math.pi
        return out

    def _bucketed(self, x, fn):
        # panels must resolve the oscillation e^{-iux}; about 4 radians per panel
        out = np.empty_like(x)
        widths = np.minimum(self.panel_width, 4.0 / np.maximum(np.abs(x), 1.0))
        buckets = np.maximum(self.panel_width * 2.0 ** -np.ceil(np.log2(self.panel_width / widths)), 1e-6)
        for wdt in np.unique(buckets):
            sel = buckets == wdt
            out[sel] = fn(x[sel], float(wdt))
        return out

    def _spline(self):
        if self._table is None:
            lo, hi = self.table_range
            far = -np.geomspace(-self.table_far, -lo, 600)[:-1]
            xs = np.concatenate([far, np.linspace(lo, hi, int(round((hi - lo) / self.table_step)) + 1)])
            f = np.maximum.accumulate(np.clip(self._bucketed(xs, self._cdf_on), 0.0, 1.0))
            dens = np.maximum(self._bucketed(xs, self._pdf_on), 0.0)
            # the light right tail drops below the quadrature error (~1e-10) quickly
            top = f > 1.0 - 1e-9
            f[top], dens[top] = 1.0, 0.0
            self._table = interpolate.CubicHermiteSpline(xs, f, dens)
            self._top = float(f[-1])
        return self._table

    def cdf(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.size <= 2000:
            return self._exact_cdf(x)
        table = self._spline()
        hi = self.table_range[1]
        inside = (x >= self.table_far) & (x <= hi)
        out = np.empty_like(x)
        out[inside] = table(x[inside])
        right = x > hi
        if self._top == 1.0:
            out[right] = 1.0
        elif right.any():
            out[right] = self._exact_cdf(x[right])
        left = x < self.table_far
        if left.any():
            out[left] = self._exact_cdf(x[left])
        return np.clip(out, 0.0, 1.0)

    def pdf(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.maximum(self._bucketed(x, self._pdf_on), 0.0)

    def _exact_cdf(self, x):
        return np.clip(self._bucketed(x, self._cdf_on), 0.0, 1.0)

    def __call__(self, x):
        return self.cdf(x)


@lru_cache(maxsize=16)
def get_stable_law(alpha: float) -> StableLaw:
    """Shared instance per alpha, so the CDF table is built once per process."""
    return StableLaw(float(alpha))


def stable_cdf(law: StableLaw, x):
    return law.cdf(x)


def integrated_levy_cf(psi: Callable[[float], complex], u: float) -> complex:
    """CF of ``int_0^1 X(t) dt`` for a Levy process with exponent psi: exp(int_0^1 psi(u s) ds)."""
    re = integrate.quad(lambda s: np.real(psi(u * s)), 0.0, 1.0, epsabs=1e-13, epsrel=1e-12)[0]
    im = integrate.quad(lambda s: np.imag(psi(u * s)), 0.0, 1.0, epsabs=1e-13, epsrel=1e-12)[0]
    return complex(np.exp(re + 1j * im))


# ---------------------------------------------------------------------------
# goodness of fit


def normal_cdf(x):
    return special.ndtr(np.asarray(x, dtype=float))[()]


def _nonempty(samples):
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise DomainError("empty sample")
    return x


def ks_statistic(samples, cdf: Callable) -> float:
    """sup_x |F_n(x) - F(x)|, evaluated on both sides of every sample point."""
    x = np.sort(_nonempty(samples))
    n = x.size
    right = np.searchsorted(x, x, side="right") / n
    left = np.searchsorted(x, x, side="left") / n
    f_at = np.asarray(cdf(x), dtype=float)
    f_before = np.asarray(cdf(np.nextafter(x, -np.inf)), dtype=float)
    return float(max(np.max(np.abs(right - f_at)), np.max(np.abs(left - f_before))))


def _pool(obs, exp, min_expected):
    order = np.argsort(exp)
    obs, exp = obs[order], exp[order]
    small = np.cumsum(exp) < min_expected
    # merge the smallest cells until the merged cell reaches min_expected
    k = int(np.sum(small)) + 1 if small.any() else 0
    if k:
        obs = np.concatenate([[obs[:k].sum()], obs[k:]])
        exp = np.concatenate([[exp[:k].sum()], exp[k:]])
    return obs, exp


def chi_square(observed, expected, min_expected: float = 5.0):
    """Pearson statistic and p-value; cells with small expectation are pooled.

    ``expected`` may be counts or probabilities; it is rescaled to the observed total.
    """
    obs = np.asarray(observed, dtype=float)
    exp = np.asarray(expected, dtype=float)
    if obs.size == 0 or obs.sum() == 0:
        raise DomainError("empty sample")
    exp = exp * obs.sum() / exp.sum()
    extra = obs[exp == 0].sum()
    if extra > 0:
        return math.inf, 0.0
    obs, exp = _pool(obs[exp > 0], exp[exp > 0], min_expected)
    if obs.size < 2:
        return 0.0, 1.0
    stat = float(np.sum((obs - exp) ** 2 / exp))
    return stat, float(stats.chi2.sf(stat, obs.size - 1))


def chi_square_two_sample(counts_a, counts_b, min_expected: float = 5.0):
    """Homogeneity test of two count vectors over the same cells."""
    a = np.asarray(counts_a, dtype=float)
    b = np.asarray(counts_b, dtype=float)
    if a.sum() == 0 or b.sum() == 0:
        raise DomainError("empty sample")
    tot = a + b
    keep = tot > 0
    a, b, tot = a[keep], b[keep], tot[keep]
    order = np.argsort(tot)
    a, b, tot = a[order], b[order], tot[order]
    frac = min(a.sum(), b.sum()) / tot.sum()
    small = np.cumsum(tot) * frac < min_expected
    k = int(np.sum(small)) + 1 if small.any() else 0
    if k:
        a = np.concatenate([[a[:k].sum()], a[k:]])
        b = np.concatenate([[b[:k].sum()], b[k:]])
    if a.size < 2:
        return 0.0, 1.0
    stat, p, _, _ = stats.chi2_contingency(np.vstack([a, b]), correction=False)
    return float(stat), float(p)


def ecf_distance(samples, cf: Callable, u_grid) -> float:
    """max over the grid of |empirical CF - model CF|."""
    x = _nonempty(samples)
    u = np.asarray(u_grid, dtype=float)
    emp = np.array([np.mean(np.exp(1j * ui * x)) for ui in u])
    return float(np.max(np.abs(emp - np.asarray(cf(u)))))


def standardize(samples, b: float, a: float):
    if not a > 0:
        raise DomainError(f"scale must be positive, got {a}")
    return (np.asarray(samples, dtype=float) - b) / a


def target_cdf(case_tag: str, alpha: Optional[float] = None) -> Callable:
    """CDF of the limit law for a case: standard normal for a/b, ``StableLaw(alpha)`` for c."""
    if case_tag in ("a", "b"):
        return normal_cdf
    if case_tag == "c":
        return get_stable_law(alpha).cdf
    raise ValidationError(f"unknown case {case_tag!r}")
