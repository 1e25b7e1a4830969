"""Cooperative games over data sources.

Coalitions are encoded as integer bitmasks: bit ``i`` is set when source ``i``
belongs to the coalition. The empty coalition is ``0`` and the grand coalition
of an ``n``-source game is ``(1 << n) - 1``.
"""

from __future__ import annotations

from collections import OrderedDict
from typing import Callable, Iterable, Sequence, Union

import numpy as np

CoalitionLike = Union[int, Iterable[int]]

#: Above this many sources the memo table becomes LRU-bounded.
UNBOUNDED_CACHE_MAX_N = 20
LRU_CACHE_SIZE = 1 << 20
#: Largest n for which a dense utility table may be materialised.
ENUMERATION_MAX_N = 20


class InvalidCoalitionError(ValueError):
    pass


class EnumerationLimitError(ValueError):
    """Raised when an exact computation would enumerate too many subsets."""


def to_mask(members: CoalitionLike) -> int:
    if isinstance(members, (int, np.integer)):
        return int(members)
    mask = 0
    for i in members:
        mask |= 1 << int(i)
    return mask


def members_of(mask: int, n: int | None = None) -> list[int]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    if n is not None and out and out[-1] >= n:
        raise InvalidCoalitionError(f"coalition contains source {out[-1]} >= n={n}")
    return out


def popcount(masks: np.ndarray) -> np.ndarray:
    return np.bitwise_count(np.asarray(masks, dtype=np.int64)).astype(np.int64)


class CooperativeGame:
    """A game ``<D, v>`` with a memoised utility oracle.

    ``utility`` receives a coalition bitmask and must be deterministic. The
    declared ``utility_range`` is used by the sample-size planners; values
    outside it raise on evaluation.
    """

    def __init__(
        self,
        n: int,
        utility: Callable[[int], float],
        utility_range: tuple[float, float],
        name: str = "game",
    ):
        if n < 1:
            raise ValueError("a game needs at least one source")
        lo, hi = utility_range
        if lo > hi:
            raise ValueError(f"invalid utility_range {utility_range}")
        self.n = int(n)
        self.utility = utility
        self.utility_range = (float(lo), float(hi))
        self.name = name
        self.full = (1 << self.n) - 1
        self._bounded = self.n > UNBOUNDED_CACHE_MAX_N
        self._cache: dict[int, float] | OrderedDict[int, float] = (
            OrderedDict() if self._bounded else {}
        )
        self._table: np.ndarray | None = None

    def __repr__(self) -> str:
        return f"CooperativeGame(name={self.name!r}, n={self.n})"

    @property
    def range_width(self) -> float:
        return self.utility_range[1] - self.utility_range[0]

    def evaluate(self, s: CoalitionLike) -> float:
        mask = to_mask(s)
        if mask < 0 or mask > self.full:
            raise InvalidCoalitionError(
                f"coalition {mask:#x} is not a subset of the {self.n} sources"
            )
        cache = self._cache
        try:
            value = cache[mask]
        except KeyError:
            value = float(self.utility(mask))
            lo, hi = self.utility_range
            # small slack for float round-off in composed utilities
            slack = 1e-9 * max(1.0, abs(lo), abs(hi))
            if not (lo - slack <= value <= hi + slack):
                raise ValueError(
                    f"utility {value} of coalition {mask:#x} outside declared "
                    f"range {self.utility_range}"
                )
            cache[mask] = value
            if self._bounded:
                if len(cache) > LRU_CACHE_SIZE:
                    cache.popitem(last=False)
            return value
        if self._bounded:
            cache.move_to_end(mask)
        return value

    def marginal_contribution(self, i: int, s: CoalitionLike) -> float:
        mask = to_mask(s)
        if not 0 <= i < self.n:
            raise InvalidCoalitionError(f"source {i} out of range for n={self.n}")
        bit = 1 << i
        if mask & bit:
            raise ValueError(f"source {i} already belongs to the coalition")
        return self.evaluate(mask | bit) - self.evaluate(mask)

    def table(self) -> np.ndarray:
        """Dense array of ``v`` indexed by coalition bitmask."""
        if self._table is None:
            if self.n > ENUMERATION_MAX_N:
                raise EnumerationLimitError(
                    f"n={self.n} exceeds the dense-table limit {ENUMERATION_MAX_N}"
                )
            self._table = np.array(
                [self.evaluate(m) for m in range(1 << self.n)], dtype=float
            )
        return self._table

    def values(self, masks: np.ndarray) -> np.ndarray:
        """Vectorised evaluation for an array of bitmasks."""
        masks = np.asarray(masks, dtype=np.int64)
        if self.n <= ENUMERATION_MAX_N:
            return self.table()[masks]
        uniq, inv = np.unique(masks, return_inverse=True)
        vals = np.array([self.evaluate(int(m)) for m in uniq], dtype=float)
        return vals[inv]

    def restrict(self, sources: Sequence[int]) -> "CooperativeGame":
        """Sub-game on ``sources``, relabelled ``0..len(sources)-1``."""
        sources = list(sources)
        parent = self

        def utility(mask: int) -> float:
            full_mask = 0
            for j, src in enumerate(sources):
                if mask >> j & 1:
                    full_mask |= 1 << src
            return parent.evaluate(full_mask)

        return CooperativeGame(
            len(sources), utility, self.utility_range, name=f"{self.name}|restricted"
        )


def table_game(
    values: Sequence[float] | np.ndarray,
    utility_range: tuple[float, float] | None = None,
    name: str = "table",
) -> CooperativeGame:
    """Game whose utility is read from a dense table of length ``2**n``."""
    values = np.asarray(values, dtype=float)
    n = int(values.size).bit_length() - 1
    if values.size != 1 << n or n < 1:
        raise ValueError("utility table length must be a power of two >= 2")
    if utility_range is None:
        utility_range = (float(values.min()), float(values.max()))
    game = CooperativeGame(n, lambda m: values[m], utility_range, name=name)
    game._table = values.copy()
    game._table.setflags(write=False)
    return game


def make_additive_game(weights: Sequence[float]) -> CooperativeGame:
    weights = [float(w) for w in weights]
    if not weights:
        raise ValueError("weights must be non-empty")
    lo = sum(w for w in weights if w < 0)
    hi = sum(w for w in weights if w > 0)

    def utility(mask: int) -> float:
        return float(sum(w for i, w in enumerate(weights) if mask >> i & 1))

    return CooperativeGame(len(weights), utility, (lo, hi), name="additive")


def make_random_monotone_game(n: int, seed: int) -> CooperativeGame:
    """Random monotone game with utilities in ``[0, 1]``.

    Each coalition takes the maximum of its immediate subsets plus a random
    non-negative increment, which enforces ``S <= T => v(S) <= v(T)``.
    """
    if not 1 <= n <= 16:
        raise ValueError(f"n must lie in [1, 16], got {n}")
    rng = np.random.default_rng(seed)
    size = 1 << n
    increments = rng.random(size)
    values = np.zeros(size)
    order = sorted(range(size), key=lambda m: (m.bit_count(), m))
    for m in order:
        base = 0.0
        sub = m
        while sub:
            low = sub & -sub
            base = max(base, values[m ^ low])
            sub ^= low
        values[m] = base + (increments[m] if m else 0.0)
    top = values[size - 1]
    if top > 0:
        values /= top
    return table_game(values, (0.0, 1.0), name=f"monotone(n={n},seed={seed})")


def random_table_game(n: int, rng: np.random.Generator, zero_empty: bool = False) -> CooperativeGame:
    """Uniform ``[-1, 1]`` utilities; used by the randomised validation suites."""
    values = rng.uniform(-1.0, 1.0, size=1 << n)
    if zero_empty:
        values[0] = 0.0
    return table_game(values, (-1.0, 1.0), name=f"random(n={n})")


def two_source_fixture() -> CooperativeGame:
    """Two interchangeable sources: v(∅)=0, v({0})=v({1})=0.5, v({0,1})=0.8."""
    return table_game([0.0, 0.5, 0.5, 0.8], (0.0, 1.0), name="two_source")
