"""Cycle partitions of permutations derived from stick-breaking.

Three samplers produce the same law of the cycle partition:

* ``sample_partition_markov`` runs the decreasing chain n -> n - A_n -> ... -> 0
  on the decrement matrix;
* ``sample_partition_thinning`` throws the remaining balls box by box
  (Bernoulli sieve), which needs O(log n) draws and is the large-n sampler;
* ``sample_permutation_basic`` builds the actual permutation from a uniform
  sample and the stick atoms.

``exact_partition_law`` is the brute-force oracle for small n.
"""
from __future__ import annotations

import bisect
import csv
import itertools
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterable, Mapping, Sequence, Tuple

import mpmath
import numpy as np

from .errors import DomainError, NumericError, ValidationError
from .factor_models import Beta, FactorModel

__all__ = [
    "CyclePartition",
    "CycledPermutation",
    "DecrementRow",
    "ExactPartitionLaw",
    "decrement_pmf",
    "sample_partition_markov",
    "sample_partition_thinning",
    "thinning_sequence",
    "sample_permutation_basic",
    "cycles_from_points",
    "exact_partition_law",
    "exact_decrement_sequence_law",
    "divisibility_bound",
    "frequency_prefix",
]

EXACT_LAW_MAX_N = 30

PartitionKey = Tuple[int, ...]


@dataclass(frozen=True, eq=True)
class CyclePartition:
    """Counts ``K_{n,r}`` of cycles of each length r; absent lengths mean zero."""

    n: int
    counts: Mapping[int, int] = field(hash=False)

    def __post_init__(self):
        if any(k < 1 or r < 1 or r > self.n for r, k in self.counts.items()):
            raise ValidationError(f"bad cycle counts {dict(self.counts)} for n={self.n}")
        if sum(r * k for r, k in self.counts.items()) != self.n:
            raise ValidationError(f"cycle lengths of {dict(self.counts)} do not sum to n={self.n}")

    @classmethod
    def from_lengths(cls, lengths: Iterable[int]) -> "CyclePartition":
        lengths = list(lengths)
        return cls(sum(lengths), dict(Counter(lengths)))

    @classmethod
    def identity(cls, n: int) -> "CyclePartition":
        return cls(n, {1: n})

    @property
    def num_cycles(self) -> int:
        return sum(self.counts.values())

    @property
    def key(self) -> PartitionKey:
        """Cycle lengths sorted in decreasing order."""
        return tuple(sorted((r for r, k in self.counts.items() for _ in range(k)), reverse=True))

    def lengths(self):
        return sorted(self.counts)


@dataclass(frozen=True)
class CycledPermutation:
    """Cycles written in the order produced by the Basic Construction."""

    cycles: Tuple[Tuple[int, ...], ...]

    @property
    def n(self) -> int:
        return sum(len(c) for c in self.cycles)

    def partition(self) -> CyclePartition:
        return CyclePartition.from_lengths(len(c) for c in self.cycles)

    def mapping(self) -> Dict[int, int]:
        """The permutation as a dict i -> sigma(i)."""
        out = {}
        for c in self.cycles:
            for i, j in zip(c, c[1:] + c[:1]):
                out[i] = j
        return out

    def __str__(self):
        return "".join("(" + " ".join(map(str, c)) + ")" for c in self.cycles)


@dataclass(frozen=True)
class DecrementRow:
    n: int
    probs: np.ndarray  # probs[m - 1] = q(n, m)

    def __post_init__(self):
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1.0) > 1e-12:
            raise NumericError(f"decrement row at n={self.n} is not stochastic",
                               abs(self.probs.sum() - 1.0))

    def q(self, m: int) -> float:
        return float(self.probs[m - 1])


# ---------------------------------------------------------------------------
# decrement matrix


@lru_cache(maxsize=65536)
def _row(model: FactorModel, n: int) -> DecrementRow:
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    if n == 1:
        return DecrementRow(1, np.ones(1))
    v = model.binomial_mixture(n)
    if isinstance(model, Beta):
        probs = v[1:] / math.exp(model.log_no_ball_complement(n))
    else:
        # sum of the m >= 1 terms equals 1 - E W^n up to quadrature error
        probs = v[1:] / v[1:].sum()
    return DecrementRow(n, probs)


@lru_cache(maxsize=65536)
def _cum_row(model: FactorModel, n: int):
    cum = np.cumsum(_row(model, n).probs)
    cum[-1] = 1.0
    return cum.tolist()


def decrement_pmf(model: FactorModel, n: int) -> DecrementRow:
    """Row ``q(n, 1..n)`` of the decrement matrix.

    ``q(n, m) = C(n, m) E[W^(n-m) (1-W)^m] / (1 - E W^n)``; the Beta case uses
    log-beta differences, the others adaptive quadrature of the binomial mixture.
    """
    return _row(model, int(n))


def _check_n(n):
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")


# ---------------------------------------------------------------------------
# samplers


def sample_partition_markov(model: FactorModel, n: int, gen: np.random.Generator) -> CyclePartition:
    _check_n(n)
    counts: Dict[int, int] = defaultdict(int)
    m = n
    while m > 0:
        step = min(bisect.bisect_right(_cum_row(model, m), gen.random()) + 1, m)
        counts[step] += 1
        m -= step
    return CyclePartition(n, dict(counts))


def markov_sequence(model: FactorModel, n: int, gen: np.random.Generator):
    """Decrements of the chain in time order (first entry is A_n)."""
    _check_n(n)
    out, m = [], n
    while m > 0:
        step = min(bisect.bisect_right(_cum_row(model, m), gen.random()) + 1, m)
        out.append(step)
        m -= step
    return out


def thinning_sequence(model: FactorModel, n: int, gen: np.random.Generator):
    """Occupied box sizes in box order; box 1 sits next to 1 on the unit interval.

    Each step draws one W and sends Binomial(m, 1 - W) of the remaining m balls
    into the current box.  Empty boxes are skipped, which is exactly the
    conditioning on a nonzero decrement.
    """
    _check_n(n)
    out, m = [], n
    sample_log_pair, binomial = model.sample_log_pair, gen.binomial
    while m > 0:
        _, eta = sample_log_pair(gen)
        d = int(binomial(m, math.exp(-eta)))
        if d:
            out.append(d)
            m -= d
    return out


def sample_partition_thinning(model: FactorModel, n: int, gen: np.random.Generator) -> CyclePartition:
    counts = Counter(thinning_sequence(model, n, gen))
    return CyclePartition(n, dict(counts))


def _cycles_from_logs(log_u: np.ndarray, log_atoms: np.ndarray) -> CycledPermutation:
    # point i lies in (Q_{j+1}, Q_j]  <=>  log_atoms[j+1] < log_u[i] <= log_atoms[j]
    box = np.searchsorted(-log_atoms, -log_u, side="right") - 1
    order = np.argsort(log_u, kind="stable")
    cycles, current, current_box = [], [], None
    for i in order:
        if current and box[i] != current_box:
            cycles.append(tuple(current))
            current = []
        current.append(int(i) + 1)
        current_box = box[i]
    cycles.append(tuple(current))
    return CycledPermutation(tuple(cycles))


def cycles_from_points(u: Sequence[float], atoms: Sequence[float]) -> CycledPermutation:
    """Permutation of the Basic Construction for sample ``u`` and atoms ``1 = Q_0 > Q_1 > ...``.

    The atoms must reach below ``min(u)``.  Points are labelled 1..n in the
    order given.
    """
    u = np.asarray(u, dtype=float)
    atoms = np.asarray(atoms, dtype=float)
    if atoms[0] != 1.0 or np.any(np.diff(atoms) >= 0) or atoms[-1] >= u.min():
        raise DomainError("atoms must decrease from 1 to below min(u)")
    return _cycles_from_logs(np.log(u), np.log(atoms))


def sample_permutation_basic(model: FactorModel, n: int, gen: np.random.Generator) -> CycledPermutation:
    _check_n(n)
    u = gen.random(n)
    while np.any(u == 0.0):
        u[u == 0.0] = gen.random(int(np.sum(u == 0.0)))
    log_u = np.log(u)
    lowest = log_u.min()
    log_atoms = [0.0]
    while log_atoms[-1] >= lowest:
        xi, _ = model.sample_log_pair(gen)
        log_atoms.append(log_atoms[-1] - xi)
    return _cycles_from_logs(log_u, np.asarray(log_atoms))


# ---------------------------------------------------------------------------
# exact laws


@dataclass(frozen=True)
class ExactPartitionLaw:
    n: int
    table: Mapping[PartitionKey, mpmath.mpf]

    def probability(self, key: PartitionKey) -> float:
        return float(self.table.get(tuple(sorted(key, reverse=True)), 0))

    def as_floats(self) -> Dict[PartitionKey, float]:
        return {k: float(v) for k, v in self.table.items()}

    def total(self) -> float:
        return float(mpmath.fsum(self.table.values()))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["partition", "probability"])
            for key in sorted(self.table, reverse=True):
                w.writerow(["+".join(map(str, key)), format(float(self.table[key]), ".17g")])


def _mp_row(model: FactorModel, k: int):
    """Row q(k, .) as mpf values; exact beta-function ratios for Beta models."""
    if k == 1:
        return [mpmath.mpf(1)]
    if isinstance(model, Beta):
        a, b = mpmath.mpf(model.a), mpmath.mpf(model.b)
        denom = 1 - mpmath.beta(a + k, b) / mpmath.beta(a, b)
        return [mpmath.binomial(k, m) * mpmath.beta(a + k - m, b + m) / mpmath.beta(a, b) / denom
                for m in range(1, k + 1)]
    return [mpmath.mpf(float(p)) for p in _row(model, k).probs]


@lru_cache(maxsize=64)
def _exact_laws(model: FactorModel, n: int):
    with mpmath.workdps(34):
        laws = [{(): mpmath.mpf(1)}]
        for k in range(1, n + 1):
            row = _mp_row(model, k)
            law: Dict[PartitionKey, mpmath.mpf] = defaultdict(lambda: mpmath.mpf(0))
            for m in range(1, k + 1):
                qm = row[m - 1]
                for key, p in laws[k - m].items():
                    i = bisect.bisect_left([-x for x in key], -m)
                    law[key[:i] + (m,) + key[i:]] += qm * p
            laws.append(dict(law))
    return laws


def exact_partition_law(model: FactorModel, n: int) -> ExactPartitionLaw:
    """Exact law of the multiset of chain decrements, by dynamic programming.

    ``P_n(lambda) = sum over distinct m in lambda of q(n, m) P_{n-m}(lambda - m)``,
    accumulated in 34-digit arithmetic.
    """
    _check_n(n)
    if n > EXACT_LAW_MAX_N:
        raise DomainError(f"exact law limited to n <= {EXACT_LAW_MAX_N}, got {n}")
    return ExactPartitionLaw(n, _exact_laws(model, n)[n])


def exact_decrement_sequence_law(model: FactorModel, n: int) -> Dict[Tuple[int, ...], float]:
    """Law of the ordered decrement sequence (time order) by enumerating compositions of n."""
    _check_n(n)
    if n > 16:
        raise DomainError("composition enumeration limited to n <= 16")
    rows = {k: _mp_row(model, k) for k in range(1, n + 1)}
    out = {}
    with mpmath.workdps(34):
        for cuts in itertools.product((0, 1), repeat=n - 1):
            seq, run = [], 1
            for c in cuts:
                if c:
                    seq.append(run)
                    run = 1
                else:
                    run += 1
            seq.append(run)
            p, m = mpmath.mpf(1), n
            for step in seq:
                p *= rows[m][step - 1]
                m -= step
            out[tuple(seq)] = float(p)
    return out


def divisibility_bound(model: FactorModel, n: int, k: int) -> float:
    """``k * sum_{j=1}^{floor(n/k) - 1} q(n, j k)``."""
    if not 1 <= k <= n:
        raise DomainError(f"need 1 <= k <= n, got k={k}, n={n}")
    probs = decrement_pmf(model, n).probs
    js = k * np.arange(1, n // k)
    return float(k * math.fsum(probs[js - 1])) if len(js) else 0.0


def frequency_prefix(model: FactorModel, j: int, gen: np.random.Generator) -> np.ndarray:
    """First ``j`` box frequencies ``P_i = W_1 ... W_{i-1} (1 - W_i)``."""
    if j < 1:
        raise DomainError("j must be positive")
    xi, eta = model.sample_logs(gen, j)
    before = np.concatenate([[0.0], np.cumsum(xi)[:-1]])
    return np.exp(-before - eta)
