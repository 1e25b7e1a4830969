"""Acceptance criteria, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are printed even
without ``-s``).
"""

import itertools
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from derdava.cli import main
from derdava.deletion import IndependentBernoulli, point_mass
from derdava.experiments import (
    ExperimentSpec,
    curve_area,
    make_addition_removal_fixture,
    noise_spearman,
    run_addition_removal,
    run_deletion_simulation,
)
from derdava.game import make_random_monotone_game, random_table_game, table_game, two_source_fixture
from derdava.risk import DiscreteDistribution, RiskSpec, c_cvar_minus, c_cvar_plus, risk_derdava, risk_semivalue
from derdava.semivalue import Banzhaf, Beta, CustomWeights, LeaveOneOut, Shapley, exact_semivalue, npo_extend
from derdava.valuation import EstimatorConfig, exact_derdava, mc_derdava, mcmc012_derdava, plan_sample_size
from derdava.validation import (
    AXIOMS,
    check_axiom,
    check_npo_consistency,
    find_ranking_divergence,
    random_deletion_model,
    static_dual_game,
)

FAMILIES = (Shapley(), Banzhaf(), LeaveOneOut(), Beta(16, 4))


@pytest.fixture
def verdict(capsys):
    def emit(criterion, ok, detail, elapsed, limit):
        fast = elapsed < limit
        status = "PASS" if ok and fast else "FAIL"
        with capsys.disabled():
            print(f"\n{status} criterion {criterion}: {detail} [{elapsed:.4g}s, limit {limit:g}s]")
        assert ok, detail
        assert fast, f"took {elapsed:.3g}s, limit {limit}s"

    return emit


def best_of(fn, reps=50):
    best = math.inf
    for _ in range(reps):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return out, best


def test_criterion_01_npo_extension_rows(verdict):
    table, elapsed = best_of(lambda: npo_extend(Shapley(), 5))
    want5 = [1 / 5, 1 / 20, 1 / 30, 1 / 20, 1 / 5]
    want3 = [1 / 3, 1 / 6, 1 / 3]
    err = max(np.max(np.abs(table.row(5) - want5)), np.max(np.abs(table.row(3) - want3)))
    verdict(1, err <= 1e-12, f"max row error {err:.2e}", elapsed, 1e-3)


def test_criterion_02_cvar_worked_example(verdict):
    dist = DiscreteDistribution.from_pairs([(1, 0.2), (2, 0.3), (3, 0.5)])
    value, elapsed = best_of(lambda: c_cvar_minus(dist, 0.6))
    err = abs(value - 11 / 6)
    verdict(2, err <= 1e-12, f"C-CVaR-(0.6) = {value!r}, error {err:.2e}", elapsed, 1e-3)


def test_criterion_03_point_mass_identity(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 9))
        game = random_table_game(n, rng)
        for prior in FAMILIES:
            tau = exact_derdava(game, prior, point_mass(n)).scores
            worst = max(worst, float(np.max(np.abs(tau - exact_semivalue(game, prior)))))
    verdict(3, worst <= 1e-12, f"max abs error {worst:.2e} over 100 games x 4 families", time.perf_counter() - t0, 10)


def test_criterion_04_static_dual_equivalence(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    worst = 0.0
    for t in range(100):
        n = int(rng.integers(1, 9))
        game = random_table_game(n, rng)
        model = random_deletion_model(n, rng)
        prior = FAMILIES[t % 4]
        tau = exact_derdava(game, prior, model).scores
        dual = exact_semivalue(static_dual_game(game, model), prior)
        worst = max(worst, float(np.max(np.abs(tau - dual))))
    verdict(4, worst <= 1e-9, f"max abs error {worst:.2e} over 100 instances", time.perf_counter() - t0, 30)


def test_criterion_05_axiom_suite(verdict):
    t0 = time.perf_counter()
    reports = [check_axiom(axiom, 50, seed=5) for axiom in AXIOMS]
    rng = np.random.default_rng(5)
    npo = []
    for n in range(2, 11):
        priors = FAMILIES + (Beta(4, 16), Beta(1, 1), CustomWeights(tuple(rng.dirichlet(np.ones(n)))))
        for nulls in range(1, n):
            for prior in priors:
                npo.append(check_npo_consistency(prior, n, nulls, seed=n * 100 + nulls))
    failed = [r.axiom for r in reports + npo if not r.passed or r.tolerance > 1e-9]
    worst = max(r.max_violation for r in reports + npo)
    detail = f"4 axioms x 50 trials and {len(npo)} NPO checks, worst violation {worst:.2e}, failed {failed}"
    verdict(5, not failed, detail, time.perf_counter() - t0, 60)


def test_criterion_06_estimator_convergence(verdict):
    t0 = time.perf_counter()
    planned = plan_sample_size(8, 1.0, 0.01, 0.05)
    mc_err, mcmc_err, rhats = [], [], []
    for seed in range(10):
        game = make_random_monotone_game(8, seed)
        model = IndependentBernoulli(tuple(np.random.default_rng(seed).uniform(0.2, 1.0, 8)))
        exact = exact_derdava(game, Shapley(), model).scores
        mc = mc_derdava(game, Shapley(), model, EstimatorConfig(seed=seed, epsilon=0.01, delta=0.05))
        assert mc.samples_used >= planned
        mcmc = mcmc012_derdava(game, Shapley(), model, EstimatorConfig(seed=seed, gr_threshold=1.005))
        mc_err.append(float(np.max(np.abs(mc.scores - exact))))
        mcmc_err.append(float(np.max(np.abs(mcmc.scores - exact))))
        rhats.append(mcmc.diagnostics["gelman_rubin"])
    ok = max(mc_err) <= 0.02 and max(mcmc_err) <= 0.02 and max(rhats) <= 1.005
    detail = (
        f"T={planned}; MC max error {max(mc_err):.4f}; 012-MCMC max error {max(mcmc_err):.4f} "
        f"at max rho {max(rhats):.5f}"
    )
    verdict(6, ok, detail, time.perf_counter() - t0, 300)


def test_criterion_07_deletion_simulation(verdict):
    t0 = time.perf_counter()
    spec = ExperimentSpec("DeletionSimulation", two_source_fixture(), Shapley(), IndependentBernoulli((1.0, 0.7)), trials=10_000)
    rep = run_deletion_simulation(spec)
    tau = rep.values("derdava")
    z_tau, z_phi = rep.summary["z_vs_derdava"], rep.summary["z_vs_semivalue"]
    ok = np.allclose(tau, [0.43, 0.28], atol=1e-12) and np.all(z_tau <= 3) and z_phi[1] > 3
    detail = f"mean {np.round(rep.values('recomputed_mean'), 4).tolist()}, z vs DeRDaVa {np.round(z_tau, 2).tolist()}, z vs Shapley {np.round(z_phi, 1).tolist()}"
    verdict(7, ok, detail, time.perf_counter() - t0, 30)


def test_criterion_08_risk_identities(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    worst = 0.0
    for t in range(50):
        n = int(rng.integers(1, 7))
        game = random_table_game(n, rng)
        model = random_deletion_model(n, rng)
        prior = FAMILIES[t % 4]
        tau = exact_derdava(game, prior, model).scores
        for side in ("averse", "seeking"):
            spec = RiskSpec(side, 1.0)
            worst = max(worst, float(np.max(np.abs(risk_semivalue(game, prior, model, spec) - tau))))
            worst = max(worst, float(np.max(np.abs(risk_derdava(game, prior, model, spec).scores - tau))))
    bad = 0
    alphas = np.linspace(0.05, 1.0, 20)
    for _ in range(1000):
        k = int(rng.integers(1, 8))
        dist = DiscreteDistribution.from_pairs(list(zip(rng.normal(size=k), rng.dirichlet(np.ones(k)))))
        mean = math.fsum(v * p for v, p in zip(dist.values, dist.probs))
        lo = np.array([c_cvar_minus(dist, a) for a in alphas])
        hi = np.array([c_cvar_plus(dist, a) for a in alphas])
        ok = np.all(lo <= mean + 1e-12) and np.all(hi >= mean - 1e-12)
        ok = ok and np.all(np.diff(lo) >= -1e-12) and np.all(np.diff(hi) <= 1e-12)
        bad += not ok
    detail = f"alpha=1 max error {worst:.2e} on 50 instances; {bad} of 1000 distributions violate bounds or monotonicity"
    verdict(8, worst <= 1e-9 and bad == 0, detail, time.perf_counter() - t0, 60)


def symmetric_game(n):
    sizes = np.array([bin(m).count("1") for m in range(1 << n)])
    return table_game(np.sqrt(sizes / n), (0.0, 1.0))


def test_criterion_09_qualitative_behaviours(verdict):
    t0 = time.perf_counter()
    # (a) interchangeable sources: score rises with staying probability
    game = symmetric_game(4)
    grid = np.linspace(0.0, 1.0, 11)
    mono = True
    for prior in FAMILIES:
        col = [exact_derdava(game, prior, IndependentBernoulli((p, 0.7, 0.5, 0.9))).scores[0] for p in grid]
        mono &= bool(np.all(np.diff(col) >= -1e-12))
        ranked = exact_derdava(game, prior, IndependentBernoulli((0.2, 0.4, 0.6, 0.8))).scores
        mono &= bool(np.all(np.diff(ranked) >= -1e-12))
    # (b) label noise against score
    rates = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
    rhos = [noise_spearman(seed, rates, Banzhaf(), stay_prob=0.9) for seed in range(20)]
    # (c) scaled semivalue and DeRDaVa can rank differently
    flip = find_ranking_divergence(seed=9)
    # (d) removing low scorers first keeps more expected accuracy than random removal
    low, rand = [], []
    for seed in range(20):
        g, model = make_addition_removal_fixture(seed)
        low.append(curve_area(run_addition_removal(ExperimentSpec("AdditionRemoval", g, model=model, seed=seed))))
        rand.append(curve_area(run_addition_removal(ExperimentSpec("AdditionRemoval", g, model=model, seed=seed, order="random"))))
    ok = mono and np.mean(rhos) <= -0.7 and flip is not None and np.mean(low) >= np.mean(rand)
    detail = (
        f"(a) monotone={mono}; (b) mean Spearman {np.mean(rhos):.3f}; "
        f"(c) divergence found={flip is not None}; "
        f"(d) mean AUC lowest-first {np.mean(low):.3f} vs random {np.mean(rand):.3f} "
        f"({sum(a >= b for a, b in zip(low, rand))}/20 seeds)"
    )
    verdict(9, ok, detail, time.perf_counter() - t0, 600)


def test_criterion_10_cli_idempotence(verdict, tmp_path):
    from pathlib import Path

    t0 = time.perf_counter()
    configs = Path(__file__).resolve().parents[1] / "configs"
    jobs = [
        ("value", "two_source_exact.yaml"),
        ("value", "monotone_mc.yaml"),
        ("value", "monotone_mcmc.yaml"),
        ("experiment", "deletion_simulation.yaml"),
        ("experiment", "addition_removal.yaml"),
    ]
    mismatched = []
    for cmd, name in jobs:
        seen = []
        for run_id, threads in itertools.product((0, 1), (1, 4)):
            out = tmp_path / f"{name}-{run_id}-{threads}"
            code = main([cmd, str(configs / name), "--seed", "7", "--threads", str(threads), "--output-dir", str(out)])
            assert code == 0
            seen.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        if any(s != seen[0] for s in seen[1:]):
            mismatched.append(name)
    detail = f"{len(jobs)} configs x 2 runs x threads (1, 4); mismatched {mismatched}"
    verdict(10, not mismatched, detail, time.perf_counter() - t0, 120)


def test_cvar_example_is_exact_in_rationals():
    # oracle for criterion 2 in exact arithmetic
    atoms = [(Fraction(1), Fraction(1, 5)), (Fraction(2), Fraction(3, 10)), (Fraction(3), Fraction(1, 2))]
    remaining, acc = Fraction(3, 5), Fraction(0)
    for v, p in atoms:
        take = min(p, remaining)
        acc += take * v
        remaining -= take
    assert acc / Fraction(3, 5) == Fraction(11, 6)
