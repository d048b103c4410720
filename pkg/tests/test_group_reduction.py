import math
from fractions import Fraction
from functools import reduce as fold

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scrip import two_agent
from scrip.errors import ValidationError
from scrip.group_reduction import reduce, simulate_grouped


def test_reference_reduction():
    gs = reduce(['1/2', '3/10', '1/5'])
    assert gs.sizes == [5, 3, 2]
    assert gs.N == 10
    assert gs.members(1) == [5, 6, 7]
    assert gs.rates == [Fraction(1, 2), Fraction(3, 10), Fraction(1, 5)]
    assert gs.to_dict()['p'] == ['1/2', '3/10', '1/5']


def test_float_rates_are_recognised():
    gs = reduce([0.5, 0.3, 0.2])
    assert gs.sizes == [5, 3, 2]
    assert reduce([0.5, 0.5]).sizes == [1, 1]


def test_normalize():
    assert reduce([2, 3], normalize=True).sizes == [2, 3]
    with pytest.raises(ValidationError):
        reduce([2, 3])


@pytest.mark.parametrize('p, q', [
    (['1/2', '1/2'], ['1/3', '2/3']),
    (['1/2', '1/3'], None),
    (['1', '0'], None),
    (['-1/2', '3/2'], None),
    ([1 / 1234567, 1 - 1 / 1234567], None),
    (['abc', '1/2'], None),
    ([float('nan'), 0.5], None),
    ([True, 0], None),
    ([], None),
])
def test_invalid_rates(p, q):
    with pytest.raises(ValidationError):
        reduce(p, q)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(min_value=1, max_value=20), min_size=2, max_size=5))
def test_sizes_are_minimal_and_proportional(weights):
    total = sum(weights)
    gs = reduce([Fraction(w, total) for w in weights])
    divisor = fold(math.gcd, weights)
    assert gs.sizes == [w // divisor for w in weights]
    assert fold(math.gcd, gs.sizes) == 1
    assert len(gs.member_of) == gs.N


def test_single_group():
    gs = reduce(['1'])
    assert gs.sizes == [1]
    run = simulate_grouped(gs, 50, record_every=10)
    assert run.zero_returns == [1] * 50
    assert len(run.trajectory) == 5
    with pytest.raises(ValidationError):
        gs.system_one_config()


def test_system_one_config():
    config = reduce(['1/2', '3/10', '1/5']).system_one_config(seed=3)
    assert config.n == 3
    assert config.p == pytest.approx((0.5, 0.3, 0.2))
    assert config.q == config.p
    assert config.d == 2


def test_lockstep_audit():
    gs = reduce(['1/2', '3/10', '1/5'])
    run = simulate_grouped(gs, 100_000, seed=1, record_every=10_000)
    assert run.checks > 0
    assert int(run.final_groups.sum()) == 0
    for group in range(3):
        assert set(run.final_members[gs.members(group)].tolist()) == {int(run.final_groups[group])}
    assert [t for t, _ in run.trajectory] == list(range(10_000, 100_001, 10_000))


def test_grouped_run_is_deterministic():
    gs = reduce(['2/3', '1/3'])
    first = simulate_grouped(gs, 5_000, seed=8)
    second = simulate_grouped(gs, 5_000, seed=8)
    np.testing.assert_array_equal(first.final_members, second.final_members)
    assert first.zero_returns == second.zero_returns
    with pytest.raises(ValidationError):
        simulate_grouped(gs, 0)


def test_group_level_matches_two_agent_system():
    gs = reduce(['2/3', '1/3'])
    run = simulate_grouped(gs, 200_000, seed=2)
    expected = two_agent.solve((2 / 3, 1 / 3), (2 / 3, 1 / 3), d=2).expected_return
    assert expected == pytest.approx(3.0)
    assert abs(float(np.mean(run.zero_returns)) - expected) < 0.15


@pytest.mark.slow
def test_running_mean_settles():
    run = simulate_grouped(reduce(['1/2', '3/10', '1/5']), 1_000_000, seed=0)
    assert run.running_mean_drift() < 0.1
