"""Executable checks of the robust axioms, NPO-consistency and the static dual."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .deletion import (
    DeletionModel,
    IndependentBernoulli,
    JointCategorical,
    SizeWeighted,
    enumerate_support,
)
from .game import CooperativeGame, make_random_monotone_game, random_table_game, table_game, to_mask
from .semivalue import (
    Banzhaf,
    Beta,
    LeaveOneOut,
    SemivaluePrior,
    Shapley,
    exact_semivalue,
    npo_extend,
    semivalue_from_coefficients,
)
from .valuation import exact_derdava

AXIOMS = (
    "RobustLinearity",
    "RobustDummyPlayer",
    "RobustInterchangeability",
    "RobustMonotonicity",
)
DEFAULT_TOL = 1e-9
MONOTONE_TOL = 1e-12


@dataclass
class AxiomReport:
    axiom: str
    passed: bool
    trials: int
    tolerance: float
    max_violation: float = 0.0
    witness: dict[str, Any] | None = None
    details: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "axiom": self.axiom,
            "passed": self.passed,
            "trials": self.trials,
            "tolerance": self.tolerance,
            "max_violation": self.max_violation,
            "witness": self.witness,
            "details": self.details,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# ------------------------------------------------------------------ derived games


def static_dual_game(game: CooperativeGame, model: DeletionModel) -> CooperativeGame:
    """Deterministic game ``S -> E[v(S ∩ D)]``."""
    support = enumerate_support(model)
    masks = np.array([m for m, _ in support], dtype=np.int64)
    probs = np.array([p for _, p in support])
    v = game.table()
    coalitions = np.arange(1 << game.n, dtype=np.int64)
    dual = v[coalitions[:, None] & masks[None, :]] @ probs
    return table_game(dual, game.utility_range, name=f"{game.name}|dual")


def post_deletion_utility(game: CooperativeGame, stayers) -> CooperativeGame:
    """``nu(S) = v(S ∩ stayers)`` on the original support; leavers become null players."""
    keep = to_mask(stayers)
    if keep >> game.n:
        raise ValueError("stayers must be a subset of the game's sources")
    return CooperativeGame(
        game.n, lambda m: game.evaluate(m & keep), game.utility_range, name=f"{game.name}|nu"
    )


# ------------------------------------------------------------------ random fixtures


def _random_prior(rng: np.random.Generator) -> SemivaluePrior:
    pick = int(rng.integers(0, 4))
    if pick == 0:
        return Shapley()
    if pick == 1:
        return Banzhaf()
    if pick == 2:
        return LeaveOneOut()
    return Beta(float(rng.uniform(0.5, 16)), float(rng.uniform(0.5, 16)))


def random_deletion_model(n: int, rng: np.random.Generator) -> DeletionModel:
    pick = int(rng.integers(0, 3))
    if pick == 0:
        return IndependentBernoulli(tuple(rng.uniform(0, 1, size=n)))
    if pick == 1:
        q = rng.dirichlet(np.ones(n + 1))
        return SizeWeighted(q)
    k = int(rng.integers(1, min(1 << n, 12) + 1))
    masks = rng.choice(1 << n, size=k, replace=False)
    probs = rng.dirichlet(np.ones(k))
    return JointCategorical(n, {int(m): float(p) for m, p in zip(masks, probs)})


def _swap_bits(mask: int, i: int, j: int) -> int:
    bi, bj = mask >> i & 1, mask >> j & 1
    if bi != bj:
        mask ^= (1 << i) | (1 << j)
    return mask


def _exchangeable_model(n: int, i: int, j: int, rng: np.random.Generator) -> DeletionModel:
    """A deletion model symmetric under swapping sources ``i`` and ``j``."""
    pick = int(rng.integers(0, 3))
    if pick == 0:
        p = rng.uniform(0, 1, size=n)
        p[j] = p[i]
        return IndependentBernoulli(tuple(p))
    if pick == 1:
        return SizeWeighted(rng.dirichlet(np.ones(n + 1)))
    raw = rng.dirichlet(np.ones(1 << n))
    sym = {m: 0.5 * (raw[m] + raw[_swap_bits(m, i, j)]) for m in range(1 << n)}
    return JointCategorical(n, sym)


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, trial]))


# ------------------------------------------------------------------ axiom checks


def _linearity_trial(rng, tol):
    n = int(rng.integers(1, 9))
    prior = _random_prior(rng)
    model = random_deletion_model(n, rng)
    v = random_table_game(n, rng)
    w = random_table_game(n, rng)
    vw = table_game(v.table() + w.table(), (-2.0, 2.0))
    lhs = exact_derdava(v, prior, model).scores + exact_derdava(w, prior, model).scores
    rhs = exact_derdava(vw, prior, model).scores
    err = float(np.max(np.abs(lhs - rhs)))
    return err, {"n": n, "prior": prior.to_dict(), "lhs": lhs.tolist(), "rhs": rhs.tolist()}


def _dummy_trial(rng, tol):
    n = int(rng.integers(1, 9))
    prior = _random_prior(rng)
    model = random_deletion_model(n, rng)
    dp = int(rng.integers(0, n))
    c = float(rng.uniform(-1, 1))
    base = rng.uniform(-1, 1, size=1 << n)
    masks = np.arange(1 << n)
    # v(S) = u(S \ {dp}) + c [dp in S] with u(∅) = 0
    u = base[masks & ~(1 << dp)]
    u = u - base[0]
    values = u + c * ((masks >> dp) & 1)
    game = table_game(values, (-3.0, 3.0))
    tau = exact_derdava(game, prior, model).scores
    expected = sum(p for m, p in model.enumerate_support() if m >> dp & 1) * c
    err = abs(tau[dp] - expected)
    return err, {"n": n, "dummy": dp, "prior": prior.to_dict(), "tau": tau.tolist(), "expected": expected}


def _interchange_trial(rng, tol):
    n = int(rng.integers(2, 9))
    prior = _random_prior(rng)
    i, j = (int(x) for x in rng.choice(n, size=2, replace=False))
    base = rng.uniform(-1, 1, size=1 << n)
    values = np.array([0.5 * (base[m] + base[_swap_bits(m, i, j)]) for m in range(1 << n)])
    game = table_game(values, (-1.0, 1.0))
    model = _exchangeable_model(n, i, j, rng)
    tau = exact_derdava(game, prior, model).scores
    err = abs(tau[i] - tau[j])
    return err, {"n": n, "pair": [i, j], "prior": prior.to_dict(), "tau": tau.tolist()}


def _monotone_trial(rng, tol):
    n = int(rng.integers(1, 9))
    prior = _random_prior(rng)
    model = random_deletion_model(n, rng)
    game = make_random_monotone_game(n, int(rng.integers(0, 2**31)))
    tau = exact_derdava(game, prior, model).scores
    err = float(max(0.0, -tau.min()))
    return err, {"n": n, "prior": prior.to_dict(), "tau": tau.tolist()}


_TRIALS: dict[str, tuple[Callable, float]] = {
    "RobustLinearity": (_linearity_trial, DEFAULT_TOL),
    "RobustDummyPlayer": (_dummy_trial, DEFAULT_TOL),
    "RobustInterchangeability": (_interchange_trial, DEFAULT_TOL),
    "RobustMonotonicity": (_monotone_trial, MONOTONE_TOL),
}


def check_axiom(axiom: str, trials: int, seed: int) -> AxiomReport:
    """Run ``trials`` randomised instances of ``axiom`` against exact DeRDaVa."""
    if axiom not in _TRIALS:
        raise ValueError(f"unknown axiom {axiom!r}; choose from {AXIOMS}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    fn, tol = _TRIALS[axiom]
    worst = 0.0
    for t in range(trials):
        err, info = fn(_trial_rng(seed, t), tol)
        worst = max(worst, err)
        if not err <= tol:
            witness = {"seed": seed, "trial": t, "violation": err, **info}
            return AxiomReport(axiom, False, t + 1, tol, worst, witness)
    return AxiomReport(axiom, True, trials, tol, worst)


def check_npo_consistency(
    prior: SemivaluePrior, n: int, num_null: int, seed: int, tol: float = DEFAULT_TOL
) -> AxiomReport:
    """Pad a random game with null players and compare extended semivalues.

    Non-null scores under ``w^n`` on the padded game must equal scores under
    ``w^{n - num_null}`` on the unpadded game.
    """
    if not (0 <= num_null < n <= 10):
        raise ValueError("need 0 <= num_null < n <= 10")
    rng = np.random.default_rng(np.random.SeedSequence([seed, n, num_null]))
    k = n - num_null
    small = rng.uniform(-1, 1, size=1 << k)
    real = np.sort(rng.choice(n, size=k, replace=False))
    masks = np.arange(1 << n)
    compact = np.zeros_like(masks)
    for j, src in enumerate(real):
        compact |= ((masks >> src) & 1) << j
    padded = table_game(small[compact], (-1.0, 1.0))
    table = npo_extend(prior, n)
    big = semivalue_from_coefficients(padded, table, n)
    ref = semivalue_from_coefficients(table_game(small, (-1.0, 1.0)), table, k)
    err = float(np.max(np.abs(big[real] - ref)))
    nulls = np.setdiff1d(np.arange(n), real)
    err = max(err, float(np.max(np.abs(big[nulls]), initial=0.0)))
    passed = err <= tol
    witness = None
    if not passed:
        witness = {
            "seed": seed,
            "n": n,
            "num_null": num_null,
            "prior": prior.to_dict(),
            "non_null": real.tolist(),
            "padded_scores": big.tolist(),
            "restricted_scores": ref.tolist(),
        }
    return AxiomReport("NPOConsistency", passed, 1, tol, err, witness, {"prior": prior.to_dict(), "n": n, "num_null": num_null})


def check_dual_equivalence(trials: int, seed: int, tol: float = DEFAULT_TOL) -> AxiomReport:
    """exact DeRDaVa against the prior's semivalue on the static dual game."""
    worst = 0.0
    for t in range(trials):
        rng = _trial_rng(seed + 1, t)
        n = int(rng.integers(1, 9))
        prior = _random_prior(rng)
        model = random_deletion_model(n, rng)
        game = random_table_game(n, rng)
        tau = exact_derdava(game, prior, model).scores
        dual = exact_semivalue(static_dual_game(game, model), prior)
        err = float(np.max(np.abs(tau - dual)))
        worst = max(worst, err)
        if not err <= tol:
            witness = {"seed": seed, "trial": t, "n": n, "prior": prior.to_dict(), "tau": tau.tolist(), "dual": dual.tolist()}
            return AxiomReport("StaticDualEquivalence", False, t + 1, tol, worst, witness)
    return AxiomReport("StaticDualEquivalence", True, trials, tol, worst)


def find_ranking_divergence(seed: int, max_tries: int = 500) -> dict[str, Any] | None:
    """Search small random monotone games for a DeRDaVa vs scaled-semivalue rank flip."""
    from .valuation import scaled_semivalue

    for t in range(max_tries):
        rng = _trial_rng(seed + 2, t)
        n = int(rng.integers(3, 6))
        game = make_random_monotone_game(n, int(rng.integers(0, 2**31)))
        model = IndependentBernoulli(tuple(rng.uniform(0.1, 1.0, n)))
        prior = _random_prior(rng)
        tau = exact_derdava(game, prior, model).scores
        ss = scaled_semivalue(game, prior, model).scores
        # only count strict, well-separated orderings
        if np.min(np.abs(np.diff(np.sort(tau)))) < 1e-6 or np.min(np.abs(np.diff(np.sort(ss)))) < 1e-6:
            continue
        a, b = np.argsort(-tau, kind="stable"), np.argsort(-ss, kind="stable")
        if not np.array_equal(a, b):
            return {
                "trial": t,
                "n": n,
                "prior": prior.to_dict(),
                "staying": list(model.p),
                "derdava": tau.tolist(),
                "scaled": ss.tolist(),
                "derdava_order": a.tolist(),
                "scaled_order": b.tolist(),
            }
    return None


STANDARD_PRIORS: tuple[SemivaluePrior, ...] = (Shapley(), Banzhaf(), LeaveOneOut(), Beta(16.0, 4.0))


def run_validation_suite(seed: int, trials: int) -> list[AxiomReport]:
    reports = [check_axiom(a, trials, seed) for a in AXIOMS]
    for prior in STANDARD_PRIORS:
        for n in range(2, 11):
            for nulls in range(0, n):
                reports.append(check_npo_consistency(prior, n, nulls, seed))
    reports.append(check_dual_equivalence(trials, seed))
    return reports
