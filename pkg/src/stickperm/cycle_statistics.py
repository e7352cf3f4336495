"""Exact statistics of a cycle partition.

``log_order`` is log O_n with O_n the lcm of the represented cycle lengths,
``log_T`` is log of the product of all cycle lengths, and ``pittel_gap`` is the
prime-power expression for their difference,

    log T_n - log O_n = sum_p log p * sum_{s >= 1} (D_{n, p^s} - 1)^+ .

Lengths are factorized with a smallest-prime-factor table up to
``SPF_LIMIT`` and trial division by sieved primes beyond it.
"""
from __future__ import annotations

import math
from functools import lru_cache, reduce
from typing import Callable, Dict

import numpy as np

from .errors import DomainError
from .partition_samplers import CyclePartition

__all__ = [
    "PrimeSieve",
    "get_sieve",
    "prime_exponent_profile",
    "log_order",
    "exact_order",
    "log_T",
    "d_stat",
    "pittel_gap",
    "separable",
    "stats_row",
]

SPF_LIMIT = 1 << 22
BIGINT_ORDER_MAX_N = 10_000


class PrimeSieve:
    """Smallest-prime-factor table on [0, limit]; immutable after construction."""

    def __init__(self, limit: int):
        limit = max(int(limit), 2)
        spf = np.zeros(limit + 1, dtype=np.int32)
        for p in range(2, math.isqrt(limit) + 1):
            if spf[p] == 0:
                block = spf[p * p:: p]
                block[block == 0] = p
        idx = np.nonzero(spf == 0)[0]
        spf[idx] = idx  # primes (and 0, 1) map to themselves
        spf.setflags(write=False)
        self.limit = limit
        self.spf = spf
        self.primes = idx[idx >= 2].tolist()

    def factorize(self, r: int) -> Dict[int, int]:
        """Prime factorization of a positive integer as {p: exponent}."""
        out: Dict[int, int] = {}
        if r > self.limit:
            for p in self.primes:
                if p * p > r:
                    break
                if r % p == 0:
                    e = 0
                    while r % p == 0:
                        r //= p
                        e += 1
                    out[p] = e
            if r > self.limit:
                if r > self.limit * self.limit:
                    raise DomainError(f"cannot factorize {r} with a sieve up to {self.limit}")
                # no prime factor up to sqrt(r) left: the cofactor is prime
                out[r] = 1
                return out
        spf = self.spf
        while r > 1:
            p = int(spf[r])
            e = 0
            while r % p == 0:
                r //= p
                e += 1
            out[p] = out.get(p, 0) + e
        return out


@lru_cache(maxsize=8)
def _sieve(limit: int) -> PrimeSieve:
    return PrimeSieve(limit)


def get_sieve(n: int) -> PrimeSieve:
    """Shared sieve able to factorize every length up to ``n``.

    Beyond ``SPF_LIMIT`` the table stops growing; the sieved primes then reach
    sqrt(n) as long as n <= SPF_LIMIT**2.
    """
    limit = SPF_LIMIT if n > SPF_LIMIT else max(1024, 1 << (max(int(n), 2) - 1).bit_length())
    return _sieve(limit)


@lru_cache(maxsize=1 << 18)
def _factor(r: int, limit: int):
    return tuple(sorted(_sieve(limit).factorize(r).items()))


def _factorization(r: int, n: int):
    return _factor(r, get_sieve(n).limit)


def prime_exponent_profile(partition: CyclePartition) -> Dict[int, int]:
    """``{p: max_r v_p(r)}`` over represented lengths r."""
    prof: Dict[int, int] = {}
    for r in partition.counts:
        for p, e in _factorization(r, partition.n):
            if e > prof.get(p, 0):
                prof[p] = e
    return prof


def log_order(partition: CyclePartition) -> float:
    """log of the lcm of the cycle lengths, in nats."""
    return math.fsum(e * math.log(p) for p, e in prime_exponent_profile(partition).items())


def exact_order(partition: CyclePartition) -> int:
    """O_n as a Python integer (intended for n <= 10**4)."""
    return reduce(math.lcm, partition.counts, 1)


def log_T(partition: CyclePartition) -> float:
    return math.fsum(k * math.log(r) for r, k in partition.counts.items())


def d_stat(partition: CyclePartition, j: int) -> int:
    """Number of cycles whose length is divisible by j."""
    if not 1 <= j <= partition.n:
        raise DomainError(f"need 1 <= j <= n, got j={j}")
    return sum(k for r, k in partition.counts.items() if r % j == 0)


def pittel_gap(partition: CyclePartition) -> float:
    """``sum_p log p sum_s (D_{n,p^s} - 1)^+`` over prime powers p^s <= n.

    Only prime powers dividing some represented length have D > 0, so D is
    accumulated from the factorizations instead of scanning every p^s <= n.
    """
    d: Dict[tuple, int] = {}
    for r, k in partition.counts.items():
        for p, e in _factorization(r, partition.n):
            for s in range(1, e + 1):
                d[(p, s)] = d.get((p, s), 0) + k
    return math.fsum(math.log(p) * (c - 1) for (p, _), c in d.items() if c > 1)


def separable(partition: CyclePartition, h: Callable[[int], float]) -> float:
    """``sum_r K_{n,r} h(r)``."""
    return math.fsum(k * h(r) for r, k in partition.counts.items())


def stats_row(partition: CyclePartition) -> dict:
    """Row with the columns ``n, K_n, logT, logO, gap``."""
    return {
        "n": partition.n,
        "K_n": partition.num_cycles,
        "logT": log_T(partition),
        "logO": log_order(partition),
        "gap": pittel_gap(partition),
    }
