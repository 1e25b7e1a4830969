"""Coalitional CVaR and Risk-DeRDaVa."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .deletion import DeletionModel
from .game import CooperativeGame, EnumerationLimitError, table_game, to_mask
from .semivalue import SemivaluePrior, exact_semivalue, weights_for
from .valuation import (
    ESTIMATOR_MAX_N,
    EXACT_MAX_N,
    EstimatorConfig,
    ValuationResult,
    _map_sources,
    _uniform_subsets,
    _warm,
    exact_derdava,
)

MERGE_TOL = 1e-12
SIDES = ("averse", "seeking", "neutral")


class InvalidDistributionError(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finite distribution with strictly increasing atom values."""

    values: tuple[float, ...]
    probs: tuple[float, ...]

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[float, float]]) -> "DiscreteDistribution":
        if not pairs:
            raise InvalidDistributionError("a distribution needs at least one atom")
        pairs = sorted((float(v), float(p)) for v, p in pairs)
        if any(p < 0 or not math.isfinite(p) for _, p in pairs):
            raise InvalidDistributionError("atom probabilities must be non-negative")
        total = math.fsum(p for _, p in pairs)
        if abs(total - 1.0) > 1e-9:
            raise InvalidDistributionError(f"probabilities sum to {total}, not 1")
        values: list[float] = []
        groups: list[list[float]] = []
        for v, p in pairs:
            if values and v - values[-1] <= MERGE_TOL:
                groups[-1].append(p)
            else:
                values.append(v)
                groups.append([p])
        probs = [math.fsum(g) / total for g in groups]
        return cls(tuple(values), tuple(probs))

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.values, self.probs))

    def mean(self) -> float:
        return math.fsum(v * p for v, p in zip(self.values, self.probs))

    def negate(self) -> "DiscreteDistribution":
        return DiscreteDistribution.from_pairs([(-v, p) for v, p in self.atoms])

    def independent_sum(self, other: "DiscreteDistribution") -> "DiscreteDistribution":
        return DiscreteDistribution.from_pairs(
            [(a + b, p * q) for a, p in self.atoms for b, q in other.atoms]
        )


@dataclass(frozen=True)
class RiskSpec:
    side: str = "averse"
    alpha: float = 1.0

    def __post_init__(self):
        if self.side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}, got {self.side!r}")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")

    def to_dict(self) -> dict[str, Any]:
        return {"side": self.side, "alpha": self.alpha}


def _lower_tail(sorted_vals: np.ndarray, sorted_probs: np.ndarray, alpha: float) -> np.ndarray:
    """Row-wise C-CVaR⁻ for values sorted ascending along the last axis.

    Atoms need not be merged: the lambda split gives the same tail mean for
    tied values.
    """
    cum_before = np.cumsum(sorted_probs, axis=-1) - sorted_probs
    # z is the largest atom with Pr[V < z] <= alpha; the first atom always qualifies
    j = (cum_before <= alpha).sum(axis=-1) - 1
    j = np.maximum(j, 0)
    z = np.take_along_axis(sorted_vals, j[..., None], axis=-1)[..., 0]
    below = np.take_along_axis(cum_before, j[..., None], axis=-1)[..., 0]
    idx = np.arange(sorted_vals.shape[-1])
    mask = idx < j[..., None]
    head = np.where(mask, sorted_probs * sorted_vals, 0.0).sum(axis=-1)
    return head / alpha + (1.0 - below / alpha) * z


def c_cvar_minus(dist: DiscreteDistribution, alpha: float) -> float:
    """Risk-averse C-CVaR: expectation over the lower ``alpha`` tail."""
    if not dist.values:
        raise InvalidDistributionError("empty distribution")
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    vals = np.array(dist.values)
    probs = np.array(dist.probs)
    cum_before = np.concatenate([[0.0], np.cumsum(probs)[:-1]])
    j = int(np.nonzero(cum_before <= alpha)[0][-1])
    z = vals[j]
    lam = cum_before[j] / alpha
    head = math.fsum(p * v for p, v in zip(probs[:j], vals[:j]))
    return head / alpha + (1.0 - lam) * z


def c_cvar_plus(dist: DiscreteDistribution, alpha: float) -> float:
    """Risk-seeking C-CVaR: expectation over the upper ``alpha`` tail."""
    return -c_cvar_minus(dist.negate(), alpha)


def risk_measure(dist: DiscreteDistribution, spec: RiskSpec) -> float:
    if spec.side == "neutral":
        return dist.mean()
    if spec.side == "averse":
        return c_cvar_minus(dist, spec.alpha)
    return c_cvar_plus(dist, spec.alpha)


def _support_arrays(model: DeletionModel) -> tuple[np.ndarray, np.ndarray]:
    support = model.enumerate_support()
    masks = np.array([m for m, _ in support], dtype=np.int64)
    probs = np.array([p for _, p in support])
    return masks, probs


def random_utility_distribution(
    game: CooperativeGame, model: DeletionModel, s
) -> DiscreteDistribution:
    """Distribution of ``V(S) = v(S ∩ D)`` with ``D ~ P_D``."""
    mask = to_mask(s)
    masks, probs = _support_arrays(model)
    vals = game.values(masks & mask)
    return DiscreteDistribution.from_pairs(list(zip(vals.tolist(), probs.tolist())))


def _rowwise_risk(vals: np.ndarray, probs: np.ndarray, spec: RiskSpec) -> np.ndarray:
    """Risk measure of each row of ``vals`` under shared atom weights ``probs``."""
    if spec.side == "neutral":
        return vals @ probs
    sign = 1.0 if spec.side == "averse" else -1.0
    x = sign * vals
    order = np.argsort(x, axis=1, kind="stable")
    sv = np.take_along_axis(x, order, axis=1)
    sp = probs[order]
    return sign * _lower_tail(sv, sp, spec.alpha)


RISK_SUPPORT_MAX = 1 << 13


def risk_game(game: CooperativeGame, model: DeletionModel, spec: RiskSpec) -> CooperativeGame:
    """Static game ``S -> C-CVaR_alpha[V(S)]`` (or ``E[V(S)]`` when neutral)."""
    n = game.n
    if n > EXACT_MAX_N:
        raise EnumerationLimitError(
            f"exact Risk-DeRDaVa supports n <= {EXACT_MAX_N}; use the estimator"
        )
    masks, probs = _support_arrays(model)
    if masks.size > RISK_SUPPORT_MAX:
        raise EnumerationLimitError(f"deletion support {masks.size} exceeds {RISK_SUPPORT_MAX}")
    v = game.table()
    coalitions = np.arange(1 << n, dtype=np.int64)
    out = np.empty(coalitions.size)
    chunk = max(1, (1 << 22) // max(1, masks.size))
    for start in range(0, coalitions.size, chunk):
        rows = coalitions[start : start + chunk]
        vals = v[rows[:, None] & masks[None, :]]
        out[start : start + rows.size] = _rowwise_risk(vals, probs, spec)
    return table_game(out, game.utility_range, name=f"{game.name}|risk")


def _empirical_risk(samples: np.ndarray, spec: RiskSpec) -> float:
    """Monte-Carlo C-CVaR from equally weighted samples (tail average)."""
    if spec.side == "neutral":
        return float(samples.mean())
    probs = np.full(samples.size, 1.0 / samples.size)
    sign = 1.0 if spec.side == "averse" else -1.0
    sv = np.sort(sign * samples)
    return float(sign * _lower_tail(sv[None, :], probs[None, :], spec.alpha)[0])


def mc_cvar(
    game: CooperativeGame,
    model: DeletionModel,
    s: int,
    spec: RiskSpec,
    num_samples: int,
    rng: np.random.Generator,
) -> float:
    """Tail-average estimate of the risk measure of ``V(S)`` from sampled stays."""
    d = model.sample_many(rng, num_samples)
    return _empirical_risk(game.values(d & s), spec)


def risk_semivalue(
    game: CooperativeGame, prior: SemivaluePrior, model: DeletionModel, spec: RiskSpec
) -> np.ndarray:
    """Exact semivalue of :func:`risk_game`, always via the risk transform."""
    return exact_semivalue(risk_game(game, model, spec), prior)


def risk_derdava(
    game: CooperativeGame,
    prior: SemivaluePrior,
    model: DeletionModel,
    spec: RiskSpec,
    config: EstimatorConfig | None = None,
    *,
    mode: str = "exact",
    cvar_samples: int = 2048,
) -> ValuationResult:
    """Semivalue (original ``n``-source weights) of the risk-transformed game.

    ``mode="exact"`` enumerates every coalition and staying set.
    ``mode="mc"`` samples coalitions by size from the prior and estimates each
    C-CVaR from ``cvar_samples`` sampled staying sets.
    """
    t0 = time.perf_counter()
    diag = {"side": spec.side, "alpha": spec.alpha}
    if mode == "exact":
        if spec.alpha == 1.0 or spec.side == "neutral":
            # both tails collapse to the mean: reuse the DeRDaVa enumeration so
            # outputs match an exact DeRDaVa run bit for bit
            scores = exact_derdava(game, prior, model).scores
        else:
            scores = risk_semivalue(game, prior, model, spec)
        return ValuationResult(
            scores=scores,
            method="Exact",
            stderr=np.zeros(game.n),
            diagnostics=diag,
            wall_time=time.perf_counter() - t0,
        )
    if mode != "mc":
        raise ValueError(f"unknown mode {mode!r}")
    config = config or EstimatorConfig()
    n = game.n
    if n > ESTIMATOR_MAX_N:
        raise EnumerationLimitError(f"estimators support n <= {ESTIMATOR_MAX_N}")
    total = config.max_samples or 200 * n
    per_source = max(2, math.ceil(total / n))
    w = weights_for(prior, n)
    _warm(game)
    cache: dict[int, float] = {}

    def v_risk(mask: int) -> float:
        if mask not in cache:
            rng = np.random.default_rng(np.random.SeedSequence([config.seed, 7, mask]))
            cache[mask] = mc_cvar(game, model, mask, spec, cvar_samples, rng)
        return cache[mask]

    def run(i: int):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, i]))
        bit = 1 << i
        sizes = rng.choice(n, size=per_source, p=w / w.sum())
        pool = np.full(per_source, ((1 << n) - 1) & ~bit, dtype=np.int64)
        s = _uniform_subsets(rng, pool, sizes, n)
        terms = np.array([v_risk(int(m) | bit) - v_risk(int(m)) for m in s])
        return terms.mean(), terms.std(ddof=1) / math.sqrt(per_source)

    # each cached coalition is seeded by its own mask, so ordering is irrelevant
    res = _map_sources(run, n, config.threads)
    diag.update(samples_per_source=per_source, cvar_samples=cvar_samples)
    return ValuationResult(
        scores=np.array([r[0] for r in res]),
        method="MonteCarlo",
        stderr=np.array([r[1] for r in res]),
        samples_used=per_source * n,
        diagnostics=diag,
        wall_time=time.perf_counter() - t0,
    )
