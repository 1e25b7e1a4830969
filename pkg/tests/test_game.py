import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from derdava.game import (
    CooperativeGame,
    EnumerationLimitError,
    InvalidCoalitionError,
    make_additive_game,
    make_random_monotone_game,
    members_of,
    popcount,
    random_table_game,
    table_game,
    to_mask,
    two_source_fixture,
)


def test_additive_evaluate():
    g = make_additive_game([1, 2, 4])
    assert g.evaluate({0, 2}) == 5
    assert g.evaluate(set()) == 0
    assert g.marginal_contribution(2, {0}) == 4


@pytest.mark.parametrize(
    "weights, coalition, expected",
    [((1, 2), {0, 1}, 3), ((0, 0, 0), {0, 2}, 0), ((-1, 2), {0}, -1)],
)
def test_additive_cases(weights, coalition, expected):
    assert make_additive_game(weights).evaluate(coalition) == expected


def test_null_player_has_zero_marginal_contribution():
    g = make_additive_game([0.3, 0.0, 0.5])
    for s in range(8):
        if not s & 2:
            assert g.marginal_contribution(1, s) == 0.0


def test_marginal_contribution_rejects_member():
    g = two_source_fixture()
    with pytest.raises(ValueError):
        g.marginal_contribution(0, {0})


def test_out_of_support_coalition():
    g = two_source_fixture()
    with pytest.raises(InvalidCoalitionError):
        g.evaluate({2})
    with pytest.raises(InvalidCoalitionError):
        members_of(0b100, 2)


def test_utility_outside_range_raises():
    g = CooperativeGame(2, lambda m: 2.0, (0.0, 1.0))
    with pytest.raises(ValueError, match="outside declared range"):
        g.evaluate(1)


def test_evaluation_is_memoised():
    calls = []

    def utility(m):
        calls.append(m)
        return 0.1 * m

    g = CooperativeGame(3, utility, (0.0, 1.0))
    a, b = g.evaluate(5), g.evaluate(5)
    assert a == b and calls == [5]


def test_table_limit():
    g = CooperativeGame(21, lambda m: 0.0, (0.0, 1.0))
    with pytest.raises(EnumerationLimitError):
        g.table()
    # large games still evaluate pointwise
    assert g.evaluate(1 << 20) == 0.0


def test_random_monotone_chain_and_determinism():
    g = make_random_monotone_game(3, 7)
    chain = [g.evaluate(s) for s in (0, 0b1, 0b11, 0b111)]
    assert chain == sorted(chain)
    assert np.array_equal(g.table(), make_random_monotone_game(3, 7).table())
    assert make_random_monotone_game(1, 0).table().shape == (2,)


@given(st.integers(1, 7), st.integers(0, 10_000))
def test_random_monotone_has_nonnegative_marginals(n, seed):
    v = make_random_monotone_game(n, seed).table()
    masks = np.arange(1 << n)
    for i in range(n):
        without = masks[(masks >> i & 1) == 0]
        assert np.all(v[without | 1 << i] - v[without] >= 0)
    assert v.min() >= 0 and v.max() <= 1


def test_restrict_relabels_sources():
    g = make_additive_game([1, 2, 4, 8])
    sub = g.restrict([1, 3])
    assert sub.n == 2
    assert sub.evaluate(0b11) == 10
    assert sub.evaluate(0b01) == 2


def test_table_game_requires_power_of_two():
    with pytest.raises(ValueError):
        table_game([0.0, 1.0, 2.0])


@given(st.lists(st.integers(0, 30), unique=True))
def test_mask_roundtrip(members):
    assert members_of(to_mask(members)) == sorted(members)


def test_popcount_vectorised():
    assert popcount(np.array([0, 1, 3, 7, 255])).tolist() == [0, 1, 2, 3, 8]


def test_random_table_game_bounds(rng):
    g = random_table_game(4, rng, zero_empty=True)
    t = g.table()
    assert t[0] == 0.0 and t.min() >= -1 and t.max() <= 1
