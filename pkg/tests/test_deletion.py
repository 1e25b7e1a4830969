import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from derdava.deletion import (
    BetaBernoulli,
    IndependentBernoulli,
    InvalidDistributionError,
    JointCategorical,
    SizeWeighted,
    enumerate_support,
    model_from_dict,
    point_mass,
)
from oracles import bernoulli_pmf

probs = st.lists(st.floats(0, 1), min_size=1, max_size=8)


def test_bernoulli_pmf_examples():
    m = IndependentBernoulli((1.0, 0.7))
    assert m.pmf({0, 1}) == pytest.approx(0.7, abs=1e-15)
    assert m.pmf({1}) == 0.0
    assert enumerate_support(m) == [(0b01, pytest.approx(0.3)), (0b11, pytest.approx(0.7))]


def test_size_weighted_examples():
    assert SizeWeighted((0, 0, 0, 1)).pmf({0, 1, 2}) == 1.0
    support = dict(SizeWeighted((0.2, 0.3, 0.5)).enumerate_support())
    assert support == pytest.approx({0: 0.2, 1: 0.15, 2: 0.15, 3: 0.5})
    assert SizeWeighted((0, 1, 0)).marginal_staying_probability(1) == 0.5


def test_joint_examples():
    m = JointCategorical(1, {(): 0.3, (0,): 0.7})
    assert m.marginal_staying_probability(0) == pytest.approx(0.7)
    assert dict(m.enumerate_support()) == {0: 0.3, 1: 0.7}


def test_marginal_staying():
    assert IndependentBernoulli((0.5, 0.9)).marginal_staying_probability(1) == 0.9


@pytest.mark.parametrize(
    "factory",
    [
        lambda: IndependentBernoulli((0.5, 1.2)),
        lambda: JointCategorical(2, {0: 0.5, 1: 0.4}),
        lambda: JointCategorical(2, {0: -0.1, 1: 1.1}),
        lambda: JointCategorical(1, {0b10: 1.0}),
        lambda: SizeWeighted((0.5, 0.6)),
        lambda: SizeWeighted((-0.5, 1.5)),
        lambda: BetaBernoulli((1.0,), (0.0,)),
    ],
)
def test_invalid_models(factory):
    with pytest.raises(InvalidDistributionError):
        factory()


@given(probs)
def test_bernoulli_support_matches_oracle(p):
    m = IndependentBernoulli(tuple(p))
    expected = {k: v for k, v in bernoulli_pmf(p).items() if v > 0}
    got = dict(m.enumerate_support())
    assert got.keys() == expected.keys()
    for k in got:
        assert got[k] == pytest.approx(expected[k], abs=1e-12)
        assert m.pmf(k) == pytest.approx(expected[k], abs=1e-12)
    assert math.fsum(got.values()) == pytest.approx(1.0, abs=1e-9)


@given(st.lists(st.floats(0, 1), min_size=2, max_size=7))
def test_size_weighted_pmf_sums_to_one(raw):
    q = np.array(raw) + 1e-3
    m = SizeWeighted(q / q.sum())
    total = math.fsum(p for _, p in m.enumerate_support())
    assert total == pytest.approx(1.0, abs=1e-9)
    for i in range(m.n):
        assert m.marginal_staying_probability(i) == pytest.approx(
            math.fsum(p for s, p in m.enumerate_support() if s >> i & 1), abs=1e-12
        )


def test_deterministic_samples():
    rng = np.random.default_rng(0)
    assert set(IndependentBernoulli((1.0,) * 5).sample_many(rng, 100).tolist()) == {31}
    assert set(IndependentBernoulli((0.0,) * 5).sample_many(rng, 100).tolist()) == {0}
    assert point_mass(3).is_point_mass()


def test_bernoulli_inclusion_frequency():
    rng = np.random.default_rng(1)
    draws = IndependentBernoulli((0.7, 0.7, 0.7)).sample_many(rng, 100_000)
    for i in range(3):
        assert abs(np.mean(draws >> i & 1) - 0.7) < 0.01


@pytest.mark.parametrize(
    "model",
    [
        JointCategorical(3, {0b011: 0.2, 0b101: 0.5, 0b111: 0.3}),
        SizeWeighted((0.1, 0.2, 0.3, 0.4)),
        BetaBernoulli((4.0, 1.0, 2.0), (4.0, 3.0, 1.0)),
    ],
)
def test_sampling_matches_pmf(model):
    rng = np.random.default_rng(2)
    draws = model.sample_many(rng, 200_000)
    for mask, p in model.enumerate_support():
        freq = np.mean(draws == mask)
        assert abs(freq - p) < 4 * math.sqrt(p * (1 - p) / draws.size) + 1e-9


def test_joint_alias_sampling_for_large_tables():
    rng = np.random.default_rng(3)
    n = 13
    raw = rng.random(1 << n)
    model = JointCategorical(n, {m: p for m, p in enumerate(raw / raw.sum())})
    assert model._alias is not None
    draws = model.sample_many(rng, 400_000)
    # compare the distribution of |D'| against the exact one
    sizes = np.bitwise_count(draws.astype(np.uint64))
    exact = np.zeros(n + 1)
    for m, p in model.enumerate_support():
        exact[m.bit_count()] += p
    emp = np.bincount(sizes, minlength=n + 1) / draws.size
    assert np.max(np.abs(emp - exact)) < 0.005


def test_beta_bernoulli_mean_model():
    m = BetaBernoulli((4.0, 1.0), (4.0, 3.0))
    assert m.marginal_staying_probability(0) == 0.5
    assert m.pmf({0, 1}) == pytest.approx(0.5 * 0.25)


@pytest.mark.parametrize(
    "model",
    [
        IndependentBernoulli((0.2, 0.9)),
        JointCategorical(2, {0b01: 0.25, 0b11: 0.75}),
        SizeWeighted((0.2, 0.3, 0.5)),
        BetaBernoulli((1.0, 2.0), (1.0, 2.0)),
    ],
)
def test_dict_roundtrip(model):
    again = model_from_dict(model.to_dict())
    assert dict(again.enumerate_support()) == pytest.approx(dict(model.enumerate_support()))


def test_support_size_check():
    with pytest.raises(ValueError):
        enumerate_support(IndependentBernoulli((0.5,)), n=2)
