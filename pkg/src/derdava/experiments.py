"""Desk-scale studies: deletion simulation, addition/removal curves and sweeps."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.stats import spearmanr

from .deletion import DeletionModel, IndependentBernoulli
from .game import CooperativeGame, members_of, table_game
from .models import KNN, GaussianNB, ModelKind, build_utility, make_noise_fixture, make_synthetic_similarity_dataset
from .risk import RiskSpec, risk_semivalue
from .semivalue import Banzhaf, SemivaluePrior, exact_semivalue, npo_extend, semivalue_with_coefficients
from .valuation import _plain, exact_derdava, scaled_semivalue

KINDS = (
    "StayingSweep",
    "Similarity",
    "Quality",
    "AdditionRemoval",
    "DeletionSimulation",
    "RiskSweep",
)
ORDERS = ("highest_first", "lowest_first", "random")
MODES = ("add", "remove")
SCORINGS = ("derdava", "semivalue", "scaled", "random")
#: exact expected utility when the deletion support is at most this large
EXACT_SUPPORT_MAX = 4096
DEFAULT_GRID = tuple(round(0.1 * k, 1) for k in range(1, 11))


class ExperimentError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    """Everything an experiment needs; results are a deterministic function of it.

    ``game``/``model`` are required by every kind except ``Similarity`` and
    ``Quality``, which build their own classifier games from ``seed``.
    """

    kind: str
    game: CooperativeGame | None = None
    prior: SemivaluePrior = field(default_factory=Banzhaf)
    model: DeletionModel | None = None
    seed: int = 0
    trials: int = 10_000
    order: str = "lowest_first"
    mode: str = "remove"
    scoring: str = "derdava"
    num_draws: int = 2000
    alphas: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8, 1.0)
    p_grid: tuple[float, ...] = DEFAULT_GRID
    base_p: tuple[float, ...] = (1.0,)
    noise_rates: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
    stay_prob: float = 0.9
    learner: ModelKind = field(default_factory=lambda: KNN(5))
    threads: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ExperimentError(f"unknown experiment kind {self.kind!r}; choose from {KINDS}")
        if self.trials < 1:
            raise ExperimentError("trials must be >= 1")
        if self.num_draws < 1:
            raise ExperimentError("num_draws must be >= 1")
        if self.order not in ORDERS:
            raise ExperimentError(f"order must be one of {ORDERS}")
        if self.mode not in MODES:
            raise ExperimentError(f"mode must be one of {MODES}")
        if self.scoring not in SCORINGS:
            raise ExperimentError(f"scoring must be one of {SCORINGS}")
        if not self.alphas or any(not 0 < a <= 1 for a in self.alphas):
            raise ExperimentError("alphas must be a non-empty list in (0, 1]")
        if not self.p_grid or any(not 0 <= p <= 1 for p in self.p_grid):
            raise ExperimentError("p_grid must be a non-empty list in [0, 1]")
        if self.threads < 1:
            raise ExperimentError("threads must be >= 1")
        if self.kind not in ("Similarity", "Quality"):
            if self.game is None:
                raise ExperimentError(f"{self.kind} needs a game")
            if self.model is None and self.kind != "StayingSweep":
                raise ExperimentError(f"{self.kind} needs a deletion model")
            if self.model is not None and self.model.n != self.game.n:
                raise ExperimentError(
                    f"deletion model covers {self.model.n} sources, game has {self.game.n}"
                )


@dataclass(frozen=True)
class CurvePoint:
    x: float
    y_mean: float
    y_stderr: float = 0.0

    def __post_init__(self):
        if not self.y_stderr >= 0:
            raise ValueError("stderr must be non-negative")


@dataclass
class ExperimentReport:
    """Long-format result rows plus a small summary dictionary."""

    experiment: str
    rows: list[dict[str, Any]] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)

    COLUMNS = ("experiment", "source_id", "step", "param", "metric", "value", "stderr")

    def add(self, metric: str, value: float, stderr: float = 0.0, *, source_id=None, step=None, param=None):
        self.rows.append(
            {
                "source_id": source_id,
                "step": step,
                "param": param,
                "metric": metric,
                "value": float(value),
                "stderr": float(stderr),
            }
        )

    def values(self, metric: str, **where) -> np.ndarray:
        """``value`` column for rows matching ``metric`` and the given fields."""
        out = [
            r["value"]
            for r in self.rows
            if r["metric"] == metric and all(r[k] == v for k, v in where.items())
        ]
        return np.array(out)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.rows:
            w.writerow(
                [
                    self.experiment,
                    "" if r["source_id"] is None else r["source_id"],
                    "" if r["step"] is None else r["step"],
                    "" if r["param"] is None else repr(float(r["param"])),
                    r["metric"],
                    repr(r["value"]),
                    repr(r["stderr"]),
                ]
            )
        return buf.getvalue()

    def to_dict(self) -> dict[str, Any]:
        return {"experiment": self.experiment, "summary": _plain(self.summary), "rows": self.rows}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


# ------------------------------------------------------------------ helpers


def _mean_stderr(values: np.ndarray, counts: np.ndarray) -> tuple[float, float, float]:
    """Weighted mean, standard error and standard deviation with compensated sums."""
    total = int(counts.sum())
    mean = math.fsum(values * counts) / total
    if np.all(values == values[0]):
        return float(values[0]), 0.0, 0.0
    var = math.fsum(counts * (values - mean) ** 2) / max(total - 1, 1)
    sd = math.sqrt(var)
    return mean, sd / math.sqrt(total), sd


def _sub_table(v: np.ndarray, members: Sequence[int]) -> np.ndarray:
    k = len(members)
    rel = np.arange(1 << k, dtype=np.int64)
    full = np.zeros_like(rel)
    for j, src in enumerate(members):
        full |= ((rel >> j) & 1) << src
    return v[full]


def post_deletion_scores(game: CooperativeGame, table, stayers: int) -> np.ndarray:
    """NPO-extended semivalue of the surviving sub-game; quitters score 0."""
    members = members_of(stayers, game.n)
    out = np.zeros(game.n)
    if not members:
        return out
    sub = table_game(_sub_table(game.table(), members), game.utility_range)
    out[members] = semivalue_with_coefficients(sub, table.row(len(members)))
    return out


def expected_utility(
    game: CooperativeGame,
    model: DeletionModel,
    retained: int,
    draws: np.ndarray | None = None,
) -> tuple[float, float]:
    """``E[v(R ∩ D)]`` exactly from the support, or from fixed sampled ``draws``."""
    if draws is None:
        support = model.enumerate_support()
        masks = np.array([m for m, _ in support], dtype=np.int64)
        probs = np.array([p for _, p in support])
        vals = game.values(masks & retained)
        return math.fsum(vals * probs), 0.0
    vals = game.values(draws & retained)
    return _mean_stderr(vals, np.ones_like(vals))[:2]


def curve_area(points: Sequence[CurvePoint]) -> float:
    """Trapezoidal area under ``y_mean`` over the step index."""
    xs = np.array([p.x for p in points], dtype=float)
    ys = np.array([p.y_mean for p in points], dtype=float)
    return float(np.trapezoid(ys, xs))


def _support_small(model: DeletionModel) -> bool:
    if isinstance(model, IndependentBernoulli):
        free = sum(0.0 < x < 1.0 for x in model.p)
        return (1 << free) <= EXACT_SUPPORT_MAX
    if model.n <= 12:
        return True
    table = getattr(model, "table", None)
    return table is not None and len(table) <= EXACT_SUPPORT_MAX


def score_sources(spec: ExperimentSpec) -> np.ndarray:
    """Scores used to order sources in addition/removal."""
    game, model, prior = spec.game, spec.model, spec.prior
    if spec.scoring == "derdava":
        return exact_derdava(game, prior, model).scores
    if spec.scoring == "semivalue":
        return exact_semivalue(game, prior)
    if spec.scoring == "scaled":
        return scaled_semivalue(game, prior, model).scores
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 101]))
    return rng.random(game.n)


# ------------------------------------------------------------------ experiments


def run_deletion_simulation(spec: ExperimentSpec) -> ExperimentReport:
    """Recompute post-deletion semivalues over sampled staying sets.

    Each distinct staying set is scored once; the mean over ``trials`` draws
    converges to exact DeRDaVa.
    """
    game, model, prior = spec.game, spec.model, spec.prior
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0]))
    draws = model.sample_many(rng, spec.trials)
    uniq, counts = np.unique(draws, return_counts=True)
    table = npo_extend(prior, game.n)
    game.table()

    def score(mask):
        return post_deletion_scores(game, table, int(mask))

    if spec.threads > 1:
        with ThreadPoolExecutor(spec.threads) as pool:
            per_set = np.array(list(pool.map(score, uniq)))
    else:
        per_set = np.array([score(m) for m in uniq])
    tau = exact_derdava(game, prior, model).scores
    phi = exact_semivalue(game, prior)
    report = ExperimentReport("DeletionSimulation")
    means, errs = np.empty(game.n), np.empty(game.n)
    for i in range(game.n):
        mean, se, sd = _mean_stderr(per_set[:, i], counts)
        means[i], errs[i] = mean, se
        report.add("recomputed_mean", mean, se, source_id=i)
        report.add("recomputed_spread", sd, source_id=i)
        report.add("derdava", tau[i], source_id=i)
        report.add("pre_deletion_semivalue", phi[i], source_id=i)
    with np.errstate(divide="ignore", invalid="ignore"):
        z_tau = np.where(errs > 0, np.abs(means - tau) / errs, np.where(means == tau, 0.0, np.inf))
        z_phi = np.where(errs > 0, np.abs(means - phi) / errs, np.where(means == phi, 0.0, np.inf))
    report.summary = {
        "trials": spec.trials,
        "distinct_staying_sets": int(uniq.size),
        "z_vs_derdava": z_tau,
        "z_vs_semivalue": z_phi,
    }
    return report


def run_addition_removal(
    spec: ExperimentSpec, scores: np.ndarray | None = None
) -> list[CurvePoint]:
    """Expected post-deletion utility as sources are added or removed by score."""
    game, model = spec.game, spec.model
    n = game.n
    if spec.order == "random":
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 1]))
        order = rng.permutation(n)
    else:
        if scores is None:
            scores = score_sources(spec)
        scores = np.asarray(scores, dtype=float)
        if scores.shape != (n,):
            raise ExperimentError("need one score per source")
        key = -scores if spec.order == "highest_first" else scores
        order = np.argsort(key, kind="stable")
    draws = None
    if not _support_small(model):
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 2]))
        draws = model.sample_many(rng, spec.num_draws)
    retained = 0 if spec.mode == "add" else (1 << n) - 1
    points = [CurvePoint(0, *expected_utility(game, model, retained, draws))]
    for step, src in enumerate(order, start=1):
        retained ^= 1 << int(src)
        points.append(CurvePoint(step, *expected_utility(game, model, retained, draws)))
    return points


def addition_removal_report(spec: ExperimentSpec) -> ExperimentReport:
    points = run_addition_removal(spec)
    report = ExperimentReport("AdditionRemoval")
    for p in points:
        report.add("expected_utility", p.y_mean, p.y_stderr, step=int(p.x))
    report.summary = {
        "order": spec.order,
        "mode": spec.mode,
        "scoring": spec.scoring,
        "area": curve_area(points),
    }
    return report


def run_staying_sweep(spec: ExperimentSpec) -> ExperimentReport:
    """Sweep each source's own staying probability with the others held fixed.

    ``base_p`` gives the other sources' probabilities (a single value is
    broadcast). One row per (source, p) cell.
    """
    game, prior = spec.game, spec.prior
    n = game.n
    base = np.broadcast_to(np.asarray(spec.base_p, dtype=float), (n,)).copy()
    report = ExperimentReport("StayingSweep")
    for i in range(n):
        for p in spec.p_grid:
            probs = base.copy()
            probs[i] = p
            tau = exact_derdava(game, prior, IndependentBernoulli(tuple(probs))).scores
            report.add("derdava", tau[i], source_id=i, param=p)
    phi = exact_semivalue(game, prior)
    for i in range(n):
        report.add("pre_deletion_semivalue", phi[i], source_id=i)
    return report


def run_risk_sweep(spec: ExperimentSpec, tol: float = 1e-9) -> ExperimentReport:
    """Risk-DeRDaVa for both tails over the alpha grid."""
    game, prior, model = spec.game, spec.prior, spec.model
    tau = exact_derdava(game, prior, model).scores
    phi = exact_semivalue(game, prior)
    report = ExperimentReport("RiskSweep")
    worst = 0.0
    for side in ("averse", "seeking"):
        for a in sorted(set(spec.alphas) | {1.0}, reverse=True):
            scores = risk_semivalue(game, prior, model, RiskSpec(side, a))
            if a == 1.0:
                worst = max(worst, float(np.max(np.abs(scores - tau))))
            for i in range(game.n):
                report.add(f"risk_{side}", scores[i], source_id=i, param=a)
    for i in range(game.n):
        report.add("derdava", tau[i], source_id=i)
        report.add("pre_deletion_semivalue", phi[i], source_id=i)
    if worst > tol:
        raise ExperimentError(f"alpha=1 column deviates from DeRDaVa by {worst:.3e}")
    report.summary = {"alpha1_max_abs_diff": worst}
    return report


def run_similarity(spec: ExperimentSpec) -> ExperimentReport:
    """Score of the duplicated source as its own and the others' staying odds vary."""
    train, val, part = make_synthetic_similarity_dataset(spec.seed)
    game = build_utility(train, val, part, spec.learner)
    dup = 2
    report = ExperimentReport("Similarity")
    phi = exact_semivalue(game, spec.prior)
    report.add("pre_deletion_semivalue", phi[dup], source_id=dup)
    for others in spec.base_p:
        for p in spec.p_grid:
            probs = [others] * game.n
            probs[dup] = p
            tau = exact_derdava(game, spec.prior, IndependentBernoulli(tuple(probs))).scores
            report.add(f"derdava_others_{others!r}", tau[dup], source_id=dup, param=p)
    return report


def run_quality(spec: ExperimentSpec) -> ExperimentReport:
    """Scores of label-noised sources at a constant staying probability."""
    rates = list(spec.noise_rates)
    train, val, part = make_noise_fixture(spec.seed, rates)
    game = build_utility(train, val, part, spec.learner)
    model = IndependentBernoulli((spec.stay_prob,) * game.n)
    tau = exact_derdava(game, spec.prior, model).scores
    report = ExperimentReport("Quality")
    for i, r in enumerate(rates):
        report.add("derdava", tau[i], source_id=i, param=r)
    rho = spearmanr(rates, tau).statistic if np.ptp(tau) > 0 else float("nan")
    report.summary = {"spearman_noise_vs_score": float(rho)}
    return report


def make_addition_removal_fixture(
    seed: int, num_sources: int = 10, rows_per_source: int = 10
) -> tuple[CooperativeGame, IndependentBernoulli]:
    """Naive-Bayes accuracy game over label-noised sources with random staying odds.

    Noise rates are spread over ``[0, 0.6]`` and shuffled; staying
    probabilities are drawn from ``U(0.3, 1)``.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
    rates = rng.permutation(np.linspace(0.0, 0.6, num_sources))
    train, val, part = make_noise_fixture(seed, rates, rows_per_source=rows_per_source)
    game = build_utility(train, val, part, GaussianNB(), name="noisy_nb")
    model = IndependentBernoulli(tuple(rng.uniform(0.3, 1.0, num_sources)))
    return game, model


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    if spec.kind == "DeletionSimulation":
        return run_deletion_simulation(spec)
    if spec.kind == "AdditionRemoval":
        return addition_removal_report(spec)
    if spec.kind == "StayingSweep":
        return run_staying_sweep(spec)
    if spec.kind == "RiskSweep":
        return run_risk_sweep(spec)
    if spec.kind == "Similarity":
        return run_similarity(spec)
    return run_quality(spec)


def noise_spearman(seed: int, rates: Sequence[float], prior: SemivaluePrior, stay_prob: float = 0.9, learner=None) -> float:
    spec = ExperimentSpec(
        "Quality", prior=prior, seed=seed, noise_rates=tuple(rates), stay_prob=stay_prob,
        learner=learner or KNN(5),
    )
    return run_quality(spec).summary["spearman_noise_vs_score"]


__all__ = [
    "KINDS",
    "CurvePoint",
    "ExperimentReport",
    "ExperimentSpec",
    "addition_removal_report",
    "curve_area",
    "make_addition_removal_fixture",
    "expected_utility",
    "noise_spearman",
    "post_deletion_scores",
    "run_addition_removal",
    "run_deletion_simulation",
    "run_experiment",
    "run_quality",
    "run_risk_sweep",
    "run_similarity",
    "run_staying_sweep",
]
