"""Laws of the stick-breaking factor W in (0, 1).

Every model exposes the pair of log-transforms used throughout the package,

    xi  = |log W|        (increment of the multiplicative renewal walk)
    eta = |log(1 - W)|   (perturbation; minus the log of a box frequency ratio)

together with their tails, log-moments, and the binomial mixtures that define
the decrement matrix.  All sampling goes through log space so that no
transform ever sees an exact 0 or 1.

Model strings follow the grammar ``beta:a,b``, ``paretolog:alpha`` or
``table:<path>`` (see :func:`parse_model`).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Union

import numpy as np
from scipy import integrate, special

from .errors import NumericError, ValidationError

__all__ = [
    "Ell",
    "LightTail",
    "RegVar",
    "MomentSummary",
    "FactorModel",
    "Beta",
    "ParetoLog",
    "TabulatedDensity",
    "parse_model",
    "sample_factor",
    "log_moments",
    "eta_tail",
    "xi_tail",
    "r_star",
]

# quad tolerances used for every model without closed forms
_EPSREL = 1e-12
_EPSABS = 1e-14


@dataclass(frozen=True)
class Ell:
    """Slowly varying function ``const * (log x) ** power``."""

    const: float = 1.0
    power: float = 0.0

    def __call__(self, x):
        if self.power == 0.0:
            return self.const * np.ones_like(np.asarray(x, dtype=float))[()]
        return self.const * np.log(x) ** self.power

    @property
    def is_constant(self) -> bool:
        return self.power == 0.0


@dataclass(frozen=True)
class LightTail:
    """P{|log W| > x} decays faster than any power."""


@dataclass(frozen=True)
class RegVar:
    """P{|log W| > x} ~ x**(-alpha) * ell(x)."""

    alpha: float
    ell: Ell = Ell()


TailClass = Union[LightTail, RegVar]


@dataclass(frozen=True)
class MomentSummary:
    """mu = E|log W|, sigma2 = Var log W, nu = E|log(1-W)|, in nats.

    Divergent moments are stored as ``math.inf``.
    """

    mu: float
    sigma2: float
    nu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValidationError(f"mu must be positive, got {self.mu}")
        if self.sigma2 < 0:
            raise ValidationError(f"sigma2 must be nonnegative, got {self.sigma2}")

    @property
    def sigma2_finite(self) -> bool:
        return math.isfinite(self.sigma2)

    @property
    def mu_finite(self) -> bool:
        return math.isfinite(self.mu)


def _quad(fn, lo, hi, what, points=None):
    with np.errstate(all="ignore"):
        kwargs = dict(epsabs=_EPSABS, epsrel=_EPSREL, limit=500, full_output=1)
        if points is not None and math.isfinite(hi):
            kwargs["points"] = points
        res = integrate.quad(fn, lo, hi, **kwargs)
    value, err = res[0], res[1]
    if len(res) > 3 and err > 1e-8 * max(1.0, abs(value)):
        raise NumericError(f"quadrature for {what} did not converge", err)
    return value


class FactorModel:
    """Base class; subclasses are frozen dataclasses and therefore hashable."""

    spec: str
    tail_class: TailClass

    # -- sampling ----------------------------------------------------------
    def sample_logs(self, rng: np.random.Generator, size: int):
        """Arrays ``(xi, eta)`` from ``size`` independent draws of W."""
        raise NotImplementedError

    def sample_log_pair(self, rng: np.random.Generator):
        """One draw as the floats ``(xi, eta)``."""
        xi, eta = self.sample_logs(rng, 1)
        return float(xi[0]), float(eta[0])

    def sample_pair(self, rng: np.random.Generator):
        """One draw as ``(w, 1 - w)``, each computed without cancellation."""
        xi, eta = self.sample_log_pair(rng)
        return math.exp(-xi), math.exp(-eta)

    def sample(self, rng: np.random.Generator) -> float:
        while True:
            w, _ = self.sample_pair(rng)
            if 0.0 < w < 1.0:
                return w

    # -- tails and moments ---------------------------------------------------
    def xi_tail(self, x):
        raise NotImplementedError

    def eta_tail(self, x):
        raise NotImplementedError

    def log_moments(self) -> MomentSummary:
        raise NotImplementedError

    def _expect(self, h: Callable[[float, float], float], what: str) -> float:
        """E h(xi, eta) by adaptive quadrature over the law of W."""
        raise NotImplementedError

    def r_star(self, y: float) -> float:
        """Integral of ``eta_tail`` over [0, y]."""
        if y < 0:
            raise ValueError("y must be nonnegative")
        if y == 0:
            return 0.0
        return _quad(lambda z: float(self.eta_tail(z)), 0.0, y, "r_star",
                     points=self._eta_breaks(y))

    def r_integral(self, x: float) -> float:
        """Integral of ``r_star`` over [0, x], as the single integral of (x - z) eta_tail(z)."""
        return _r_integral_cached(self, float(x))

    def _r_integral_quad(self, x: float) -> float:
        if x <= 0:
            return 0.0
        return _quad(lambda z: (x - z) * float(self.eta_tail(z)), 0.0, x, "r_integral",
                     points=self._eta_breaks(x))

    def _eta_breaks(self, upper):
        return None

    def binomial_mixture(self, n: int) -> np.ndarray:
        """``v[m] = C(n, m) E[W**(n-m) (1-W)**m]`` for m = 0..n."""
        raise NotImplementedError

    def _binomial_mixture_quad(self, n, var_to_logs, density, lo, hi, points=None):
        ms = np.arange(n + 1, dtype=float)
        logc = special.gammaln(n + 1) - special.gammaln(ms + 1) - special.gammaln(n - ms + 1)

        def integrand(t):
            xi, eta = var_to_logs(t)
            with np.errstate(all="ignore"):
                logterm = logc - (n - ms) * xi - ms * eta
                out = np.exp(logterm) * density(t)
            return np.nan_to_num(out, nan=0.0, posinf=0.0)

        kwargs = dict(epsabs=1e-15, epsrel=1e-12, limit=2000)
        if points is not None:
            kwargs["points"] = points
        with np.errstate(all="ignore"):
            val, err = integrate.quad_vec(integrand, lo, hi, **kwargs)
        if not np.all(np.isfinite(val)) or err > 1e-9:
            raise NumericError(f"binomial mixture quadrature failed at n={n}", err)
        return np.clip(val, 0.0, None)


@dataclass(frozen=True)
class Beta(FactorModel):
    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValidationError(f"beta parameters must be positive, got ({self.a}, {self.b})")

    @property
    def spec(self) -> str:
        return f"beta:{self.a:g},{self.b:g}"

    @property
    def tail_class(self) -> TailClass:
        return LightTail()

    def sample_logs(self, rng, size):
        if self.b == 1.0:
            # inverse CDF: W = U**(1/a)
            u = rng.random(size)
            bad = u == 0.0
            while bad.any():
                u[bad] = rng.random(int(bad.sum()))
                bad = u == 0.0
            logw = np.log(u) / self.a
        else:
            x = rng.standard_gamma(self.a, size)
            y = rng.standard_gamma(self.b, size)
            bad = (x == 0.0) | (y == 0.0)
            while bad.any():
                k = int(bad.sum())
                x[bad] = rng.standard_gamma(self.a, k)
                y[bad] = rng.standard_gamma(self.b, k)
                bad = (x == 0.0) | (y == 0.0)
            s = np.log(x + y)
            return s - np.log(x), s - np.log(y)
        return -logw, -np.log(-np.expm1(logw))

    def sample_log_pair(self, rng):
        if self.b == 1.0:
            u = rng.random()
            while u == 0.0:
                u = rng.random()
            logw = math.log(u) / self.a
            return -logw, -math.log(-math.expm1(logw))
        while True:
            x = rng.standard_gamma(self.a)
            y = rng.standard_gamma(self.b)
            if x > 0.0 and y > 0.0:
                s = math.log(x + y)
                return s - math.log(x), s - math.log(y)

    def xi_tail(self, x):
        x = np.asarray(x, dtype=float)
        return special.betainc(self.a, self.b, np.exp(-x))[()]

    def eta_tail(self, x):
        # 1 - W ~ Beta(b, a)
        x = np.asarray(x, dtype=float)
        return special.betainc(self.b, self.a, np.exp(-x))[()]

    def log_moments(self):
        a, b = self.a, self.b
        mu = special.digamma(a + b) - special.digamma(a)
        sigma2 = special.polygamma(1, a) - special.polygamma(1, a + b)
        nu = special.digamma(a + b) - special.digamma(b)
        return MomentSummary(float(mu), float(sigma2), float(nu))

    def r_star(self, y):
        if y < 0:
            raise ValueError("y must be nonnegative")
        if self.b == 1.0 and float(self.a).is_integer():
            # 1 - (1-e^-z)^k over [0, y]: substitute s = 1 - e^-z
            p = -math.expm1(-y)
            return math.fsum(p ** i / i for i in range(1, int(self.a) + 1))
        return super().r_star(y)

    def r_integral(self, x):
        if self.a == 1.0 and self.b == 1.0:
            return x + math.expm1(-x)
        return super().r_integral(x)

    def _expect(self, h, what):
        def f(w):
            return h(-math.log(w), -math.log1p(-w)) * math.exp(
                (self.a - 1) * math.log(w) + (self.b - 1) * math.log1p(-w) - special.betaln(self.a, self.b))

        return _quad(f, 0.0, 0.5, what) + _quad(f, 0.5, 1.0, what)

    def binomial_mixture(self, n):
        ms = np.arange(n + 1, dtype=float)
        logv = (special.gammaln(n + 1) - special.gammaln(ms + 1) - special.gammaln(n - ms + 1)
                + special.betaln(self.a + n - ms, self.b + ms) - special.betaln(self.a, self.b))
        return np.exp(logv)

    def log_no_ball_complement(self, n: int) -> float:
        """``log(1 - E W**n)`` computed as ``log(-expm1(log E W**n))``."""
        log_ewn = special.betaln(self.a + n, self.b) - special.betaln(self.a, self.b)
        return math.log(-math.expm1(log_ewn))


@dataclass(frozen=True)
class ParetoLog(FactorModel):
    """W = exp(-V) with P{V > x} = x**(-alpha) for x >= 1."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValidationError(f"alpha must be positive, got {self.alpha}")

    @property
    def spec(self) -> str:
        return f"paretolog:{self.alpha:g}"

    @property
    def tail_class(self) -> TailClass:
        return RegVar(self.alpha, Ell())

    def sample_logs(self, rng, size):
        u = 1.0 - rng.random(size)  # (0, 1]
        v = u ** (-1.0 / self.alpha)
        return v, -np.log(-np.expm1(-v))

    def sample_log_pair(self, rng):
        v = (1.0 - rng.random()) ** (-1.0 / self.alpha)
        return v, -math.log(-math.expm1(-v))

    def xi_tail(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(x < 1.0, 1.0, np.maximum(x, 1.0) ** -self.alpha)[()]

    def eta_tail(self, x):
        # eta > x  <=>  V < -log(1 - e^-x)
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            v0 = -np.log(-np.expm1(-x))
            out = np.where(v0 > 1.0, 1.0 - np.maximum(v0, 1.0) ** -self.alpha, 0.0)
        return out[()]

    def _eta_breaks(self, upper):
        z = -math.log(-math.expm1(-1.0))  # eta_tail vanishes beyond this point
        return [z] if z < upper else None

    def log_moments(self):
        a = self.alpha
        mu = a / (a - 1.0) if a > 1 else math.inf
        sigma2 = a / ((a - 1.0) ** 2 * (a - 2.0)) if a > 2 else math.inf
        nu = self._expect(lambda xi, eta: eta, "nu")
        return MomentSummary(mu, sigma2, nu)

    def _expect(self, h, what):
        a = self.alpha
        return _quad(lambda v: h(v, -math.log(-math.expm1(-v))) * a * v ** (-a - 1.0),
                     1.0, math.inf, what)

    def binomial_mixture(self, n):
        a = self.alpha

        def logs(v):
            return v, -math.log(-math.expm1(-v))

        return self._binomial_mixture_quad(n, logs, lambda v: a * v ** (-a - 1.0), 1.0, math.inf)


@dataclass(frozen=True)
class TabulatedDensity(FactorModel):
    """Piecewise-linear density through the points ``(x[i], f[i])``, zero off the grid."""

    x: tuple
    f: tuple
    source: str = field(default="", compare=False)
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        f = np.asarray(self.f, dtype=float)
        if x.ndim != 1 or x.shape != f.shape or len(x) < 2:
            raise ValidationError("table needs at least two (x, f) rows")
        if not (x[0] > 0 and x[-1] < 1 and np.all(np.diff(x) > 0)):
            raise ValidationError("table x must be strictly increasing inside (0, 1)")
        if np.any(f < 0):
            raise ValidationError("table density must be nonnegative")
        masses = 0.5 * (f[1:] + f[:-1]) * np.diff(x)
        total = masses.sum()
        if abs(total - 1.0) > 1e-6:
            raise ValidationError(f"table density integrates to {total:.9g}, not 1")
        object.__setattr__(self, "x", tuple(x.tolist()))
        object.__setattr__(self, "f", tuple((f / total).tolist()))
        object.__setattr__(self, "_cum", np.concatenate([[0.0], np.cumsum(masses / total)]))

    @classmethod
    def from_csv(cls, path) -> "TabulatedDensity":
        xs, fs = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().lower() == "x":
                    continue
                xs.append(float(row[0]))
                fs.append(float(row[1]))
        return cls(tuple(xs), tuple(fs), source=str(path))

    @property
    def spec(self) -> str:
        return f"table:{self.source}" if self.source else "table:<inline>"

    @property
    def tail_class(self) -> TailClass:
        return LightTail()

    @property
    def _xa(self):
        return np.asarray(self.x)

    @property
    def _fa(self):
        return np.asarray(self.f)

    def density(self, w):
        return np.interp(w, self._xa, self._fa, left=0.0, right=0.0)

    def cdf(self, w):
        xa, fa, cum = self._xa, self._fa, self._cum
        w = np.asarray(w, dtype=float)
        i = np.clip(np.searchsorted(xa, w, side="right") - 1, 0, len(xa) - 2)
        s = np.clip(w - xa[i], 0.0, xa[i + 1] - xa[i])
        slope = (fa[i + 1] - fa[i]) / (xa[i + 1] - xa[i])
        out = cum[i] + fa[i] * s + 0.5 * slope * s * s
        return np.where(w <= xa[0], 0.0, np.where(w >= xa[-1], 1.0, out))[()]

    def _inverse_cdf(self, u):
        xa, fa, cum = self._xa, self._fa, self._cum
        i = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, len(xa) - 2)
        h = xa[i + 1] - xa[i]
        slope = (fa[i + 1] - fa[i]) / h
        r = u - cum[i]
        disc = np.sqrt(np.maximum(fa[i] ** 2 + 2.0 * slope * r, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(fa[i] + disc > 0, 2.0 * r / (fa[i] + disc), 0.0)
        return xa[i] + np.clip(s, 0.0, h)

    def sample_logs(self, rng, size):
        w = self._inverse_cdf(rng.random(size))
        return -np.log(w), -np.log1p(-w)

    def sample_log_pair(self, rng):
        w = float(self._inverse_cdf(rng.random()))
        return -math.log(w), -math.log1p(-w)

    def xi_tail(self, x):
        return self.cdf(np.exp(-np.asarray(x, dtype=float)))

    def eta_tail(self, x):
        return (1.0 - self.cdf(-np.expm1(-np.asarray(x, dtype=float))))[()]

    def _eta_breaks(self, upper):
        pts = [-math.log1p(-w) for w in self.x]
        pts = [p for p in pts if 0 < p < upper]
        return pts[:50] or None

    def _expect(self, h, what):
        xs = self.x
        total = 0.0
        for lo, hi in zip(xs[:-1], xs[1:]):
            total += _quad(lambda w: h(-math.log(w), -math.log1p(-w)) * float(self.density(w)),
                           lo, hi, what)
        return total

    def log_moments(self):
        mu = self._expect(lambda xi, eta: xi, "mu")
        sigma2 = self._expect(lambda xi, eta: (xi - mu) ** 2, "sigma2")
        nu = self._expect(lambda xi, eta: eta, "nu")
        return MomentSummary(mu, sigma2, nu)

    def binomial_mixture(self, n):
        def logs(w):
            return -math.log(w), -math.log1p(-w)

        return self._binomial_mixture_quad(n, logs, lambda w: float(self.density(w)),
                                           self.x[0], self.x[-1], points=list(self.x[1:-1]))


@lru_cache(maxsize=4096)
def _r_integral_cached(model: FactorModel, x: float) -> float:
    return model._r_integral_quad(x)


def parse_model(spec: str) -> FactorModel:
    """Build a model from ``beta:a,b``, ``paretolog:alpha`` or ``table:<path>``."""
    kind, _, rest = spec.strip().partition(":")
    kind = kind.lower()
    try:
        if kind == "beta":
            a, b = (float(t) for t in rest.split(","))
            return Beta(a, b)
        if kind == "paretolog":
            return ParetoLog(float(rest))
        if kind == "table":
            if not Path(rest).is_file():
                raise ValidationError(f"table file not found: {rest}")
            return TabulatedDensity.from_csv(rest)
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"malformed model spec {spec!r}: {exc}") from exc
    raise ValidationError(f"unknown model kind in {spec!r}")


def sample_factor(model: FactorModel, gen: np.random.Generator) -> float:
    return model.sample(gen)


def log_moments(model: FactorModel) -> MomentSummary:
    return model.log_moments()


def eta_tail(model: FactorModel, x):
    """P{|log(1 - W)| > x}."""
    return model.eta_tail(x)


def xi_tail(model: FactorModel, x):
    """P{|log W| > x}."""
    return model.xi_tail(x)


def r_star(model: FactorModel, y: float) -> float:
    return model.r_star(y)
