"""Distributions over staying sets of data sources."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from .game import ENUMERATION_MAX_N, EnumerationLimitError, popcount, to_mask

PROB_TOL = 1e-9
#: JointCategorical tables larger than this use an alias table for sampling.
ALIAS_THRESHOLD = 1 << 12


class InvalidDistributionError(ValueError):
    pass


def _all_masks(n: int) -> np.ndarray:
    if n > ENUMERATION_MAX_N:
        raise EnumerationLimitError(
            f"enumerating 2^{n} staying sets exceeds the limit n <= {ENUMERATION_MAX_N}"
        )
    return np.arange(1 << n, dtype=np.int64)


def _bits(masks: np.ndarray, n: int) -> np.ndarray:
    """Boolean ``(len(masks), n)`` membership matrix."""
    masks = np.asarray(masks, dtype=np.int64)
    return ((masks[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(bool)


def _pack(bits: np.ndarray) -> np.ndarray:
    n = bits.shape[1]
    return (bits.astype(np.int64) << np.arange(n, dtype=np.int64)).sum(axis=1)


class DeletionModel:
    """A probability distribution ``P_D`` over staying sets.

    Subclasses implement :meth:`pmf_many` and :meth:`sample_many`; the scalar
    methods are thin wrappers. Models are immutable and carry no RNG state:
    every sampling call takes a :class:`numpy.random.Generator`.
    """

    n: int
    kind: str = ""

    def pmf(self, d_prime) -> float:
        mask = to_mask(d_prime)
        if mask >> self.n:
            raise ValueError(f"staying set {mask:#x} is not a subset of {self.n} sources")
        return float(self.pmf_many(np.array([mask], dtype=np.int64))[0])

    def pmf_many(self, masks: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator) -> int:
        return int(self.sample_many(rng, 1)[0])

    def sample_many(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def marginal_staying_probability(self, i: int) -> float:
        support = self.enumerate_support()
        return math.fsum(p for m, p in support if m >> i & 1)

    def enumerate_support(self) -> list[tuple[int, float]]:
        masks = _all_masks(self.n)
        probs = self.pmf_many(masks)
        keep = probs > 0
        return [(int(m), float(p)) for m, p in zip(masks[keep], probs[keep])]

    def support_size(self) -> int:
        return len(self.enumerate_support())

    def is_point_mass(self) -> bool:
        return False

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError


def enumerate_support(model: DeletionModel, n: int | None = None) -> list[tuple[int, float]]:
    if n is not None and n != model.n:
        raise ValueError(f"model is over {model.n} sources, not {n}")
    return model.enumerate_support()


@dataclass(frozen=True, eq=False)
class IndependentBernoulli(DeletionModel):
    """Each source ``i`` stays independently with probability ``p[i]``."""

    p: tuple[float, ...]
    kind = "independent"

    def __post_init__(self):
        p = tuple(float(x) for x in self.p)
        if not p:
            raise InvalidDistributionError("need at least one staying probability")
        if any(not (0.0 <= x <= 1.0) for x in p):
            raise InvalidDistributionError(f"staying probabilities must lie in [0,1]: {p}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "n", len(p))
        object.__setattr__(self, "_p", np.array(p))

    def pmf_many(self, masks: np.ndarray) -> np.ndarray:
        b = _bits(masks, self.n)
        return np.where(b, self._p, 1.0 - self._p).prod(axis=1)

    def sample_many(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return _pack(rng.random((size, self.n)) < self._p)

    def marginal_staying_probability(self, i: int) -> float:
        return self.p[i]

    def enumerate_support(self) -> list[tuple[int, float]]:
        # only sources with 0 < p < 1 branch; this keeps point masses cheap
        free = [i for i, x in enumerate(self.p) if 0.0 < x < 1.0]
        base = sum(1 << i for i, x in enumerate(self.p) if x == 1.0)
        if len(free) > ENUMERATION_MAX_N:
            raise EnumerationLimitError(f"{len(free)} uncertain sources exceed the limit")
        out = []
        for combo in range(1 << len(free)):
            mask = base
            prob = 1.0
            for j, i in enumerate(free):
                if combo >> j & 1:
                    mask |= 1 << i
                    prob *= self.p[i]
                else:
                    prob *= 1.0 - self.p[i]
            # products of tiny probabilities can underflow to exactly zero
            if prob > 0.0:
                out.append((mask, prob))
        out.sort()
        return out

    def is_point_mass(self) -> bool:
        return all(x in (0.0, 1.0) for x in self.p)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "p": list(self.p)}


class JointCategorical(DeletionModel):
    """Explicit pmf over staying sets; missing subsets have probability 0."""

    kind = "joint"

    def __init__(self, n: int, table: Mapping[Any, float]):
        self.n = int(n)
        entries: dict[int, float] = {}
        for key, prob in table.items():
            mask = to_mask(key)
            if mask >> self.n:
                raise InvalidDistributionError(f"subset {key!r} exceeds {n} sources")
            prob = float(prob)
            if prob < 0 or not math.isfinite(prob):
                raise InvalidDistributionError(f"negative probability for {key!r}")
            entries[mask] = entries.get(mask, 0.0) + prob
        total = math.fsum(entries.values())
        if abs(total - 1.0) > PROB_TOL:
            raise InvalidDistributionError(f"probabilities sum to {total}, not 1")
        self._masks = np.array(sorted(entries), dtype=np.int64)
        self._probs = np.array([entries[m] / total for m in self._masks])
        self.table = {int(m): float(p) for m, p in zip(self._masks, self._probs)}
        if len(self._masks) > ALIAS_THRESHOLD:
            self._alias = _alias_table(self._probs)
        else:
            self._alias = None
            self._cdf = np.cumsum(self._probs)
            self._cdf[-1] = 1.0

    def pmf_many(self, masks: np.ndarray) -> np.ndarray:
        masks = np.asarray(masks, dtype=np.int64)
        idx = np.searchsorted(self._masks, masks)
        idx = np.clip(idx, 0, len(self._masks) - 1)
        hit = self._masks[idx] == masks
        return np.where(hit, self._probs[idx], 0.0)

    def sample_many(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self._alias is None:
            idx = np.searchsorted(self._cdf, rng.random(size), side="right")
            idx = np.minimum(idx, len(self._masks) - 1)
        else:
            prob, alias = self._alias
            col = rng.integers(0, len(prob), size)
            idx = np.where(rng.random(size) < prob[col], col, alias[col])
        return self._masks[idx]

    def enumerate_support(self) -> list[tuple[int, float]]:
        return [(m, p) for m, p in self.table.items() if p > 0]

    def is_point_mass(self) -> bool:
        return int(np.count_nonzero(self._probs)) == 1

    def to_dict(self) -> dict[str, Any]:
        rows = []
        for m, p in self.table.items():
            rows.append({"subset": [i for i in range(self.n) if m >> i & 1], "prob": p})
        return {"kind": self.kind, "n": self.n, "table": rows}


def _alias_table(probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vose's alias method."""
    k = len(probs)
    scaled = probs * k
    prob = np.zeros(k)
    alias = np.zeros(k, dtype=np.int64)
    small = [i for i in range(k) if scaled[i] < 1.0]
    large = [i for i in range(k) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        g = large.pop()
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = scaled[g] + scaled[s] - 1.0
        (small if scaled[g] < 1.0 else large).append(g)
    for i in large + small:
        prob[i] = 1.0
        alias[i] = i
    return prob, alias


class SizeWeighted(DeletionModel):
    """``Pr[D'] = q[|D'|] / C(n, |D'|)``: mass spread evenly within each size."""

    kind = "size_weighted"

    def __init__(self, q: Sequence[float]):
        q = [float(x) for x in q]
        if len(q) < 2:
            raise InvalidDistributionError("size weights need length n + 1 >= 2")
        if any(x < 0 for x in q):
            raise InvalidDistributionError("size weights must be non-negative")
        total = math.fsum(q)
        if abs(total - 1.0) > PROB_TOL:
            raise InvalidDistributionError(f"size weights sum to {total}, not 1")
        self.q = tuple(x / total for x in q)
        self.n = len(q) - 1
        self._per_set = np.array(
            [self.q[k] / math.comb(self.n, k) for k in range(self.n + 1)]
        )

    def pmf_many(self, masks: np.ndarray) -> np.ndarray:
        return self._per_set[popcount(masks)]

    def sample_many(self, rng: np.random.Generator, size: int) -> np.ndarray:
        sizes = rng.choice(self.n + 1, size=size, p=np.array(self.q))
        keys = rng.random((size, self.n))
        ranks = np.argsort(np.argsort(keys, axis=1), axis=1)
        return _pack(ranks < sizes[:, None])

    def marginal_staying_probability(self, i: int) -> float:
        # a size-k set contains a given source with probability k / n
        return math.fsum(self.q[k] * k / self.n for k in range(self.n + 1))

    def is_point_mass(self) -> bool:
        return self.q[self.n] == 1.0 or self.q[0] == 1.0

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "q": list(self.q)}


class BetaBernoulli(DeletionModel):
    """Staying probabilities drawn from ``Beta(a_i, b_i)`` before each stay.

    Sampling is two-stage. Because each source's probability is drawn
    independently, the compound pmf equals independent Bernoulli staying with
    the Beta means ``a_i / (a_i + b_i)``.
    """

    kind = "beta_bernoulli"

    def __init__(self, a: Sequence[float], b: Sequence[float]):
        a = [float(x) for x in a]
        b = [float(x) for x in b]
        if len(a) != len(b) or not a:
            raise InvalidDistributionError("a and b must have equal non-zero length")
        if any(x <= 0 for x in a + b):
            raise InvalidDistributionError("Beta parameters must be positive")
        self.a, self.b = tuple(a), tuple(b)
        self.n = len(a)
        self._mean = IndependentBernoulli(tuple(x / (x + y) for x, y in zip(a, b)))

    def pmf_many(self, masks: np.ndarray) -> np.ndarray:
        return self._mean.pmf_many(masks)

    def sample_many(self, rng: np.random.Generator, size: int) -> np.ndarray:
        p = rng.beta(np.array(self.a), np.array(self.b), size=(size, self.n))
        return _pack(rng.random((size, self.n)) < p)

    def marginal_staying_probability(self, i: int) -> float:
        return self._mean.p[i]

    def enumerate_support(self) -> list[tuple[int, float]]:
        return self._mean.enumerate_support()

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "a": list(self.a), "b": list(self.b)}


def point_mass(n: int) -> IndependentBernoulli:
    """Nobody leaves: all mass on the full support."""
    return IndependentBernoulli((1.0,) * n)


def model_from_dict(d: Mapping[str, Any]) -> DeletionModel:
    kind = str(d.get("kind", "")).lower()
    if kind == "independent":
        return IndependentBernoulli(tuple(d["p"]))
    if kind == "joint":
        table = {tuple(row["subset"]): row["prob"] for row in d["table"]}
        return JointCategorical(int(d["n"]), table)
    if kind == "size_weighted":
        return SizeWeighted(d["q"])
    if kind == "beta_bernoulli":
        return BetaBernoulli(d["a"], d["b"])
    raise InvalidDistributionError(f"unknown deletion model kind {d.get('kind')!r}")
