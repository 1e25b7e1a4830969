"""Slow, obviously-correct reference implementations used as test oracles."""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np


def subsets(items):
    items = list(items)
    for r in range(len(items) + 1):
        for combo in itertools.combinations(items, r):
            yield combo


def mask(members) -> int:
    return sum(1 << i for i in members)


def brute_semivalue(values, weights) -> np.ndarray:
    """Size-weighted average of marginal contributions, one subset at a time."""
    n = len(weights)
    out = np.zeros(n)
    for i in range(n):
        others = [j for j in range(n) if j != i]
        total = 0.0
        for s in subsets(others):
            m = mask(s)
            total += weights[len(s)] / math.comb(n - 1, len(s)) * (values[m | 1 << i] - values[m])
        out[i] = total
    return out


def padded_coefficient(top_row, k: int, s: int) -> float:
    """Per-coalition weight for support size ``k``, obtained by padding with null players.

    A coalition of size ``s`` in a ``k``-source game matches every coalition of the
    ``n``-source game that adds any ``j`` of the ``n - k`` null players.
    """
    n = len(top_row)
    return sum(math.comb(n - k, j) * top_row[s + j] for j in range(n - k + 1))


def top_row(weights):
    n = len(weights)
    return [weights[s] / math.comb(n - 1, s) for s in range(n)]


def brute_derdava(values, weights, pmf: dict[int, float]) -> np.ndarray:
    """Expected post-deletion semivalue, enumerating staying sets then coalitions."""
    n = len(weights)
    row = top_row(weights)
    out = np.zeros(n)
    for d_mask, p in pmf.items():
        if p == 0:
            continue
        stay = [j for j in range(n) if d_mask >> j & 1]
        k = len(stay)
        for i in stay:
            rest = [j for j in stay if j != i]
            for s in subsets(rest):
                m = mask(s)
                w = padded_coefficient(row, k, len(s))
                out[i] += p * w * (values[m | 1 << i] - values[m])
    return out


def bernoulli_pmf(p) -> dict[int, float]:
    n = len(p)
    out = {}
    for m in range(1 << n):
        prob = 1.0
        for i in range(n):
            prob *= p[i] if m >> i & 1 else 1 - p[i]
        out[m] = prob
    return out


def quantile_tail_mean(atoms, alpha) -> float:
    """``(1/alpha) * integral_0^alpha F^{-1}(u) du`` for a finite distribution."""
    remaining = alpha
    acc = 0.0
    for v, p in sorted(atoms):
        take = min(p, remaining)
        acc += take * v
        remaining -= take
        if remaining <= 0:
            break
    return acc / alpha


def exact_fraction_tail(atoms, alpha) -> Fraction:
    remaining = Fraction(alpha)
    acc = Fraction(0)
    for v, p in sorted((Fraction(v), Fraction(p)) for v, p in atoms):
        take = min(p, remaining)
        acc += take * v
        remaining -= take
        if remaining <= 0:
            break
    return acc / Fraction(alpha)
