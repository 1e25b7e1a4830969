"""Semivalue priors, exact semivalues and the null-player-out extension."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any

import numpy as np
from scipy.special import betaln, gammaln

from .game import ENUMERATION_MAX_N, CooperativeGame, EnumerationLimitError, popcount


class InvalidPriorError(ValueError):
    pass


class SemivaluePrior:
    """Base class: a family of weighting terms ``w_0..w_{n-1}``."""

    family: str = ""

    def weights(self, n: int) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        return {"family": self.family}


@dataclass(frozen=True)
class Shapley(SemivaluePrior):
    family = "shapley"

    def weights(self, n: int) -> np.ndarray:
        return np.full(n, 1.0 / n)


@dataclass(frozen=True)
class LeaveOneOut(SemivaluePrior):
    family = "loo"

    def weights(self, n: int) -> np.ndarray:
        w = np.zeros(n)
        w[-1] = 1.0
        return w


@dataclass(frozen=True)
class Banzhaf(SemivaluePrior):
    family = "banzhaf"

    def weights(self, n: int) -> np.ndarray:
        denom = 2 ** (n - 1)
        return np.array([math.comb(n - 1, s) / denom for s in range(n)])


@dataclass(frozen=True)
class Beta(SemivaluePrior):
    """Beta-binomial weighting; a larger ``alpha`` favours small coalitions."""

    alpha: float = 1.0
    beta: float = 1.0
    family = "beta"

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise InvalidPriorError("Beta prior needs alpha > 0 and beta > 0")

    def weights(self, n: int) -> np.ndarray:
        s = np.arange(n)
        log_binom = gammaln(n) - gammaln(s + 1) - gammaln(n - s)
        logw = log_binom + betaln(s + self.beta, n - 1 - s + self.alpha) - betaln(
            self.beta, self.alpha
        )
        return np.exp(logw)

    def to_dict(self) -> dict[str, Any]:
        return {"family": self.family, "alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True)
class CustomWeights(SemivaluePrior):
    w: tuple[float, ...] = field(default_factory=tuple)
    family = "custom"

    def __post_init__(self):
        object.__setattr__(self, "w", tuple(float(x) for x in self.w))
        if any(x < 0 for x in self.w):
            raise InvalidPriorError("custom weights must be non-negative")
        if self.w and abs(math.fsum(self.w) - 1.0) > 1e-9:
            raise InvalidPriorError(f"custom weights sum to {math.fsum(self.w)}, not 1")

    def weights(self, n: int) -> np.ndarray:
        if len(self.w) != n:
            raise InvalidPriorError(f"custom weights have length {len(self.w)}, need {n}")
        w = np.array(self.w)
        return w / math.fsum(self.w)

    def to_dict(self) -> dict[str, Any]:
        return {"family": self.family, "weights": list(self.w)}


PRIOR_FAMILIES = ("shapley", "loo", "banzhaf", "beta", "custom")


def prior_from_dict(d: dict[str, Any]) -> SemivaluePrior:
    family = str(d.get("family", "")).lower()
    if family == "shapley":
        return Shapley()
    if family in ("loo", "leave_one_out"):
        return LeaveOneOut()
    if family == "banzhaf":
        return Banzhaf()
    if family == "beta":
        return Beta(float(d["alpha"]), float(d["beta"]))
    if family == "custom":
        return CustomWeights(tuple(d["weights"]))
    raise InvalidPriorError(f"unknown prior family {d.get('family')!r}")


def weights_for(prior: SemivaluePrior, n: int) -> np.ndarray:
    """Weighting terms ``(w_0, ..., w_{n-1})`` of ``prior`` for ``n`` sources."""
    if n < 1:
        raise ValueError("n must be >= 1")
    w = prior.weights(n)
    if w.shape != (n,) or np.any(w < 0):
        raise InvalidPriorError(f"prior {prior!r} produced invalid weights")
    return w


@lru_cache(maxsize=None)
def _binom_row(m: int) -> tuple[float, ...]:
    return tuple(float(math.comb(m, s)) for s in range(m + 1))


def binom_row(m: int) -> np.ndarray:
    return np.array(_binom_row(m))


@dataclass
class CoefficientTable:
    """Per-coalition weighting coefficients ``w^k_s`` for ``k = 1..n``.

    ``rows[k - 1]`` holds ``(w^k_0, ..., w^k_{k-1})``.
    """

    n: int
    rows: list[np.ndarray]

    def row(self, k: int) -> np.ndarray:
        if not 1 <= k <= self.n:
            raise ValueError(f"extension range is 1..{self.n}, got k={k}")
        return self.rows[k - 1]

    def term_weights(self, k: int) -> np.ndarray:
        """Weighting terms ``w^k_s * C(k-1, s)`` (a distribution over sizes)."""
        return self.row(k) * binom_row(k - 1)

    def padded(self) -> np.ndarray:
        """``(n+1, n)`` array ``M[k, s] = w^k_s`` (zero where undefined)."""
        out = np.zeros((self.n + 1, self.n))
        for k in range(1, self.n + 1):
            out[k, :k] = self.rows[k - 1]
        return out

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "rows": [r.tolist() for r in self.rows]})

    @classmethod
    def from_json(cls, text: str) -> "CoefficientTable":
        d = json.loads(text)
        return cls(int(d["n"]), [np.array(r, dtype=float) for r in d["rows"]])


def npo_extend(prior: SemivaluePrior, n: int) -> CoefficientTable:
    """Extend the ``n``-source semivalue to every smaller support size.

    The top row is ``w_s / C(n-1, s)``; each lower row follows the Pascal-type
    recurrence ``w^{k-1}_s = w^k_s + w^k_{s+1}``.
    """
    w = weights_for(prior, n)
    top = w / binom_row(n - 1)
    rows = [top]
    for k in range(n, 1, -1):
        cur = rows[-1]
        rows.append(cur[:-1] + cur[1:])
    rows.reverse()
    return CoefficientTable(n, rows)


def _check_enumerable(n: int) -> None:
    if n > ENUMERATION_MAX_N:
        raise EnumerationLimitError(
            f"exact semivalue needs 2^{n} coalitions; use an estimator for n > "
            f"{ENUMERATION_MAX_N}"
        )


def semivalue_with_coefficients(game: CooperativeGame, coeffs: np.ndarray) -> np.ndarray:
    """Weighted marginal-contribution sum with coefficients indexed by ``|S|``."""
    n = game.n
    _check_enumerable(n)
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (n,):
        raise ValueError(f"need {n} coefficients, got {coeffs.shape}")
    v = game.table()
    masks = np.arange(1 << n, dtype=np.int64)
    sizes = popcount(masks)
    out = np.empty(n)
    for i in range(n):
        bit = 1 << i
        without = masks[(masks & bit) == 0]
        mac = v[without | bit] - v[without]
        out[i] = math.fsum(coeffs[sizes[without]] * mac)
    return out


def exact_semivalue(game: CooperativeGame, prior: SemivaluePrior) -> np.ndarray:
    n = game.n
    _check_enumerable(n)
    coeffs = weights_for(prior, n) / binom_row(n - 1)
    return semivalue_with_coefficients(game, coeffs)


def semivalue_from_coefficients(
    game: CooperativeGame, table: CoefficientTable, k: int
) -> np.ndarray:
    if k > table.n:
        raise ValueError(f"table extends only to n={table.n}, requested k={k}")
    if game.n != k:
        raise ValueError(f"game has {game.n} sources, expected {k}")
    return semivalue_with_coefficients(game, table.row(k))
