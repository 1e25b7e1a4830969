"""DeRDaVa scores: exact enumeration, Monte-Carlo and 012-MCMC estimators."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .deletion import DeletionModel
from .game import CooperativeGame, EnumerationLimitError, popcount
from .semivalue import (
    CoefficientTable,
    SemivaluePrior,
    exact_semivalue,
    npo_extend,
)

EXACT_MAX_N = 13
ESTIMATOR_MAX_N = 62
T_MAX_CAP = 10**7
_CHUNK = 1 << 16


class ConfigError(ValueError):
    pass


@dataclass
class EstimatorConfig:
    num_chains: int = 4
    batch_size: int = 1000
    gr_threshold: float = 1.005
    max_samples: int | None = None
    seed: int = 0
    epsilon: float | None = None
    delta: float | None = None
    threads: int = 1

    def __post_init__(self):
        if self.num_chains < 2:
            raise ConfigError("Gelman-Rubin stopping needs num_chains >= 2")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.gr_threshold > 1:
            raise ConfigError("gr_threshold must be > 1")
        if self.max_samples is not None and self.max_samples < 1:
            raise ConfigError("max_samples must be positive")
        if (self.epsilon is None) != (self.delta is None):
            raise ConfigError("epsilon and delta must be given together")
        if self.epsilon is not None and not (self.epsilon > 0 and 0 < self.delta < 1):
            raise ConfigError("need epsilon > 0 and 0 < delta < 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return {
            "num_chains": self.num_chains,
            "batch_size": self.batch_size,
            "gr_threshold": self.gr_threshold,
            "max_samples": self.max_samples,
            "seed": self.seed,
            "epsilon": self.epsilon,
            "delta": self.delta,
        }


@dataclass
class ValuationResult:
    scores: np.ndarray
    method: str
    stderr: np.ndarray
    samples_used: int = 0
    diagnostics: dict[str, Any] = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def n(self) -> int:
        return len(self.scores)

    def to_dict(self) -> dict[str, Any]:
        # wall_time is left out so that serialised results are reproducible
        return {
            "method": self.method,
            "scores": [float(x) for x in self.scores],
            "stderr": [float(x) for x in self.stderr],
            "samples_used": int(self.samples_used),
            "diagnostics": _plain(self.diagnostics),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["source_id", "score", "stderr"])
        for i, (s, e) in enumerate(zip(self.scores, self.stderr)):
            w.writerow([i, repr(float(s)), repr(float(e))])
        return buf.getvalue()


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def _exact_result(scores: np.ndarray, method: str, t0: float, **diag) -> ValuationResult:
    return ValuationResult(
        scores=np.asarray(scores, dtype=float),
        method=method,
        stderr=np.zeros(len(scores)),
        samples_used=0,
        diagnostics=diag,
        wall_time=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------- exact


def _ternary_states(m: int) -> tuple[np.ndarray, np.ndarray]:
    """All ``3^m`` state vectors as (in-S bitmask, in-D'' bitmask) over m slots."""
    idx = np.arange(3**m, dtype=np.int64)
    s_mask = np.zeros_like(idx)
    d_mask = np.zeros_like(idx)
    for j in range(m):
        digit = idx % 3
        idx //= 3
        s_mask |= (digit == 2).astype(np.int64) << j
        d_mask |= (digit != 0).astype(np.int64) << j
    return s_mask, d_mask


def _spread(rel: np.ndarray, others: Sequence[int]) -> np.ndarray:
    """Map masks over slot positions ``0..m-1`` to masks over ``others``."""
    out = np.zeros_like(rel)
    for j, src in enumerate(others):
        out |= ((rel >> j) & 1) << src
    return out


def exact_derdava(
    game: CooperativeGame, prior: SemivaluePrior, model: DeletionModel
) -> ValuationResult:
    """Exact DeRDaVa by enumerating every (S, D') pair with S ∪ {i} ⊆ D'.

    Each other source is in one of three states (absent, staying outside S,
    in S), so each source costs ``3^(n-1)`` terms.
    """
    n = game.n
    if n > EXACT_MAX_N:
        raise EnumerationLimitError(
            f"exact DeRDaVa enumerates 3^{n - 1} states per source; n={n} exceeds "
            f"{EXACT_MAX_N}, use mc or mcmc012"
        )
    _check_model(game, model)
    t0 = time.perf_counter()
    coeff = npo_extend(prior, n).padded()
    v = game.table()
    s_rel, d_rel = _ternary_states(n - 1)
    s_size = popcount(s_rel)
    d_size = popcount(d_rel) + 1
    w = coeff[d_size, s_size]
    scores = np.empty(n)
    for i in range(n):
        others = [j for j in range(n) if j != i]
        bit = 1 << i
        s = _spread(s_rel, others)
        d = _spread(d_rel, others) | bit
        terms = model.pmf_many(d) * w * (v[s | bit] - v[s])
        scores[i] = math.fsum(terms)
    return _exact_result(scores, "Exact", t0)


def _check_model(game: CooperativeGame, model: DeletionModel) -> None:
    if model.n != game.n:
        raise ValueError(f"deletion model covers {model.n} sources, game has {game.n}")


# ---------------------------------------------------------------- Monte-Carlo


def plan_sample_size(n: int, utility_range: float, epsilon: float, delta: float) -> int:
    """Hoeffding sample count ``ceil(2 r^2 n / eps^2 * ln(2n / delta))``."""
    if n < 1 or utility_range < 0 or epsilon <= 0 or not 0 < delta < 1:
        raise ValueError("need n >= 1, r >= 0, epsilon > 0, 0 < delta < 1")
    return max(1, math.ceil(2 * utility_range**2 * n / epsilon**2 * math.log(2 * n / delta)))


def _default_max_samples(game: CooperativeGame) -> int:
    planned = plan_sample_size(game.n, max(game.range_width, 1e-12), 0.01, 0.05)
    return min(10 * planned, T_MAX_CAP)


def _uniform_subsets(
    rng: np.random.Generator, pool: np.ndarray, sizes: np.ndarray, n: int
) -> np.ndarray:
    """For each row, a uniformly random ``sizes[r]``-subset of bitmask ``pool[r]``."""
    bits = ((pool[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(bool)
    keys = rng.random(bits.shape)
    keys[~bits] = 2.0
    ranks = np.argsort(np.argsort(keys, axis=1, kind="stable"), axis=1, kind="stable")
    chosen = ranks < sizes[:, None]
    return (chosen.astype(np.int64) << np.arange(n, dtype=np.int64)).sum(axis=1)


def _mc_terms(
    game: CooperativeGame,
    table: CoefficientTable,
    model: DeletionModel,
    i: int,
    count: int,
    rng: np.random.Generator,
) -> np.ndarray:
    n = game.n
    bit = 1 << i
    out = np.zeros(count)
    size_dists = {k: table.term_weights(k) for k in range(1, n + 1)}
    for start in range(0, count, _CHUNK):
        m = min(_CHUNK, count - start)
        d = model.sample_many(rng, m)
        stay = np.nonzero(d & bit)[0]
        if stay.size == 0:
            continue
        ds = d[stay]
        k = popcount(ds)
        s_size = np.zeros(stay.size, dtype=np.int64)
        for kk in np.unique(k):
            sel = k == kk
            p = size_dists[int(kk)]
            s_size[sel] = rng.choice(len(p), size=int(sel.sum()), p=p / p.sum())
        s = _uniform_subsets(rng, ds & ~bit, s_size, n)
        out[start + stay] = game.values(s | bit) - game.values(s)
    return out


def _map_sources(fn: Callable[[int], Any], n: int, threads: int) -> list[Any]:
    if threads <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, range(n)))


def _warm(game: CooperativeGame) -> None:
    if game.n <= 20:
        game.table()


def mc_derdava(
    game: CooperativeGame,
    prior: SemivaluePrior,
    model: DeletionModel,
    config: EstimatorConfig | None = None,
) -> ValuationResult:
    """Monte-Carlo DeRDaVa by sampling staying sets from the deletion model.

    The total budget ``T`` (``config.max_samples``, or the Hoeffding plan for
    ``(epsilon, delta)``, default ``(0.01, 0.05)``) is split evenly across
    sources. Draws where the source leaves contribute a zero term.
    """
    config = config or EstimatorConfig()
    n = game.n
    if n > ESTIMATOR_MAX_N:
        raise EnumerationLimitError(f"estimators support n <= {ESTIMATOR_MAX_N}")
    _check_model(game, model)
    t0 = time.perf_counter()
    if config.max_samples is not None:
        total = config.max_samples
    else:
        eps = config.epsilon if config.epsilon is not None else 0.01
        delta = config.delta if config.delta is not None else 0.05
        total = plan_sample_size(n, game.range_width, eps, delta)
    per_source = max(2, math.ceil(total / n))
    table = npo_extend(prior, n)
    _warm(game)

    def run(i: int):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, i]))
        terms = _mc_terms(game, table, model, i, per_source, rng)
        present = int(np.count_nonzero(terms))
        return terms.mean(), terms.std(ddof=1) / math.sqrt(per_source), present

    res = _map_sources(run, n, config.threads)
    scores = np.array([r[0] for r in res])
    stderr = np.array([r[1] for r in res])
    never = [i for i in range(n) if model.marginal_staying_probability(i) == 0.0]
    return ValuationResult(
        scores=scores,
        method="MonteCarlo",
        stderr=stderr,
        samples_used=per_source * n,
        diagnostics={
            "samples_per_source": per_source,
            "nonzero_terms": [r[2] for r in res],
            "never_present": never,
        },
        wall_time=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------- 012-MCMC


def sample_012(n: int, i: int, rng: np.random.Generator) -> tuple[int, int]:
    """One 012 draw: returns (S, D') with S ∪ {i} ⊆ D'."""
    if not 0 <= i < n:
        raise ValueError(f"source {i} out of range for n={n}")
    s, d = _sample_012_many(n, i, rng, 1)
    return int(s[0]), int(d[0])


def _sample_012_many(
    n: int, i: int, rng: np.random.Generator, size: int
) -> tuple[np.ndarray, np.ndarray]:
    others = np.array([j for j in range(n) if j != i], dtype=np.int64)
    states = rng.integers(0, 3, size=(size, n - 1))
    s = ((states == 2).astype(np.int64) << others).sum(axis=1)
    d = ((states != 0).astype(np.int64) << others).sum(axis=1) | (1 << i)
    return s, d


def importance_terms(
    game: CooperativeGame,
    coeff: np.ndarray,
    model: DeletionModel,
    i: int,
    s: np.ndarray,
    d: np.ndarray,
) -> np.ndarray:
    """Per-sample terms ``P_D(D') * 3^(n-1) * w^{|D'|}_{|S|} * MaC(i | S)``."""
    bit = 1 << i
    scale = 3.0 ** (game.n - 1)
    weight = model.pmf_many(d) * scale * coeff[popcount(d), popcount(s)]
    return weight * (game.values(s | bit) - game.values(s))


def gelman_rubin(chains: Sequence[Sequence[float]]) -> float:
    """Potential scale reduction factor across ``M >= 2`` chains.

    Uses ``sqrt(((N-1)/N W + B/N) / W)`` with ``W`` the mean within-chain
    variance and ``B/N`` the variance of the chain means. Chains with no
    variance at all give 1.0.
    """
    if len(chains) < 2:
        raise ValueError("Gelman-Rubin needs at least two chains")
    arrs = [np.asarray(c, dtype=float) for c in chains]
    if any(a.size < 2 for a in arrs):
        raise ValueError("each chain needs at least two samples")
    n_mean = float(np.mean([a.size for a in arrs]))
    means = np.array([a.mean() for a in arrs])
    within = float(np.mean([a.var(ddof=1) for a in arrs]))
    between_over_n = float(means.var(ddof=1))
    if within == 0.0:
        return 1.0 if between_over_n == 0.0 else math.inf
    return math.sqrt(((n_mean - 1) / n_mean * within + between_over_n) / within)


def mcmc012_derdava(
    game: CooperativeGame,
    prior: SemivaluePrior,
    model: DeletionModel,
    config: EstimatorConfig | None = None,
) -> ValuationResult:
    """012-MCMC DeRDaVa: importance sampling with uniform ternary states.

    Needs only pmf queries on the deletion model. Every source runs
    ``num_chains`` chains that grow by ``batch_size`` samples per round until
    the Gelman-Rubin statistic drops to ``gr_threshold`` or ``max_samples``
    (per source, all chains together) is reached.
    """
    config = config or EstimatorConfig()
    n = game.n
    if n > ESTIMATOR_MAX_N:
        raise EnumerationLimitError(f"estimators support n <= {ESTIMATOR_MAX_N}")
    _check_model(game, model)
    t0 = time.perf_counter()
    coeff = npo_extend(prior, n).padded()
    t_max = config.max_samples or _default_max_samples(game)
    m_chains, b = config.num_chains, config.batch_size
    _warm(game)

    def run(i: int):
        rngs = [
            np.random.default_rng(np.random.SeedSequence([config.seed, i, c]))
            for c in range(m_chains)
        ]
        chains: list[list[np.ndarray]] = [[] for _ in range(m_chains)]
        used = 0
        c_max = 0.0
        rhat = math.inf
        while True:
            for c, rng in enumerate(rngs):
                s, d = _sample_012_many(n, i, rng, b)
                terms = importance_terms(game, coeff, model, i, s, d)
                w = model.pmf_many(d) * 3.0 ** (n - 1) * coeff[popcount(d), popcount(s)]
                c_max = max(c_max, float(w.max()))
                chains[c].append(terms)
            used += m_chains * b
            flat = [np.concatenate(ch) for ch in chains]
            rhat = gelman_rubin(flat) if flat[0].size >= 2 else math.inf
            if rhat <= config.gr_threshold or used >= t_max:
                break
        allv = np.concatenate(flat)
        return (
            float(allv.mean()),
            float(allv.std(ddof=1) / math.sqrt(allv.size)),
            used,
            rhat,
            rhat <= config.gr_threshold,
            c_max,
        )

    res = _map_sources(run, n, config.threads)
    rhats = [r[3] for r in res]
    return ValuationResult(
        scores=np.array([r[0] for r in res]),
        method="MCMC012",
        stderr=np.array([r[1] for r in res]),
        samples_used=int(sum(r[2] for r in res)),
        diagnostics={
            "gelman_rubin": float(max(rhats)),
            "gelman_rubin_per_source": rhats,
            "converged": bool(all(r[4] for r in res)),
            "samples_per_source": [r[2] for r in res],
            "empirical_max_coefficient": float(max(r[5] for r in res)),
            "gr_threshold": config.gr_threshold,
        },
        wall_time=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------- baseline


def scaled_semivalue(
    game: CooperativeGame, prior: SemivaluePrior, model: DeletionModel
) -> ValuationResult:
    """Pre-deletion semivalue times each source's marginal staying probability."""
    _check_model(game, model)
    t0 = time.perf_counter()
    phi = exact_semivalue(game, prior)
    stay = np.array([model.marginal_staying_probability(i) for i in range(game.n)])
    return _exact_result(phi * stay, "ScaledSemivalue", t0)
