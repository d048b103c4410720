import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scrip.dynamics import (
    Rule,
    SystemConfig,
    TokenState,
    TokenSystem,
    choose_provider,
    make_rng,
    sample_available,
    sample_requester,
    select_provider,
    spawn_seeds,
    step,
    warn_if_unstable,
)
from scrip.errors import InvariantViolation, ValidationError


def test_config_rejects_bad_distributions():
    with pytest.raises(ValidationError):
        SystemConfig(n=2, p=(0.5, 0.6), q=(0.5, 0.5))
    with pytest.raises(ValidationError):
        SystemConfig(n=2, p=(1.0, 0.0), q=(0.5, 0.5))
    with pytest.raises(ValidationError):
        SystemConfig(n=3, p=(0.5, 0.5), q=(0.5, 0.5))
    with pytest.raises(ValidationError):
        SystemConfig(n=1, p=(1.0,), q=(1.0,))


def test_config_beta_requires_d2():
    with pytest.raises(ValidationError):
        SystemConfig.symmetric(3, d=3, beta=0.5)
    with pytest.raises(ValidationError):
        SystemConfig.symmetric(3, d=2, beta=1.0)
    config = SystemConfig.symmetric(3, d=2, beta=0.5)
    assert config.d_max == 2
    assert config.block_width == 5


def test_config_json_schema():
    config = SystemConfig(n=2, p=(0.6, 0.4), q=(0.5, 0.5), d=3, rule='uniform', seed=11)
    assert SystemConfig.from_json(config.to_json()) == config
    with pytest.raises(ValidationError):
        SystemConfig.from_dict({'n': 2, 'p': [0.5, 0.5], 'q': [0.5, 0.5], 'colour': 'red'})
    with pytest.raises(ValidationError):
        SystemConfig.from_json('{not json')


def test_rule_parse():
    assert Rule.parse('min-token') is Rule.MIN_TOKEN
    assert Rule.parse('UNIFORM') is Rule.UNIFORM
    with pytest.raises(ValidationError):
        Rule.parse('max_token')


def test_two_type_config():
    config = SystemConfig.two_type(10, 4, alpha=10.0, beta_ratio=10.0)
    assert abs(sum(config.p) - 1.0) < 1e-12
    assert config.p[5] / config.p[0] == pytest.approx(10.0)
    assert config.q[9] / config.q[3] == pytest.approx(10.0)
    with pytest.raises(ValidationError):
        SystemConfig.two_type(10, 10, alpha=2.0, beta_ratio=2.0)


def test_token_state_requires_zero_sum():
    with pytest.raises(InvariantViolation):
        TokenState(np.array([1, 0, 0]))
    assert TokenState.zeros(4).is_zero


def test_min_token_choice():
    s = [3, -1, 0]
    assert choose_provider(s, (0, 1), Rule.MIN_TOKEN, 0.9) == 1
    assert choose_provider(s, (0, 2, 0), Rule.MIN_TOKEN, 0.9) == 2


def test_ties_are_uniform_over_distinct_agents():
    s = [0, 0, 5]
    assert choose_provider(s, (1, 1), Rule.MIN_TOKEN, 0.1) == 1
    assert choose_provider(s, (1, 1), Rule.MIN_TOKEN, 0.9) == 1
    assert choose_provider(s, (1, 0), Rule.MIN_TOKEN, 0.2) == 0
    assert choose_provider(s, (1, 0), Rule.MIN_TOKEN, 0.7) == 1
    # trois tirages, deux agents distincts à égalité
    assert choose_provider(s, (1, 1, 0), Rule.MIN_TOKEN, 0.4) == 0
    assert choose_provider(s, (1, 1, 0), Rule.MIN_TOKEN, 0.6) == 1


def test_uniform_rule_ignores_tokens():
    s = [-5, 5]
    assert choose_provider(s, (0, 1), Rule.UNIFORM, 0.7) == 1
    assert choose_provider(s, (0, 1), Rule.UNIFORM, 0.2) == 0


def test_select_provider_empty():
    with pytest.raises(ValidationError):
        select_provider(TokenState.zeros(2), (), Rule.MIN_TOKEN, make_rng(0))


def test_sample_available_with_beta():
    config = SystemConfig.symmetric(4, d=2, beta=0.5, seed=3)
    rng = make_rng(3)
    sizes = {len(sample_available(config, rng)) for _ in range(200)}
    assert sizes == {1, 2}


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=2 ** 32),
    n=st.integers(min_value=2, max_value=6),
    d=st.integers(min_value=1, max_value=3),
)
def test_step_conserves_tokens(seed, n, d):
    config = SystemConfig.symmetric(n, d=d, seed=seed)
    rng = make_rng(seed)
    state = TokenState.zeros(n)
    for _ in range(50):
        nxt, outcome = step(state, config, rng)
        moved = int(np.abs(nxt.s - state.s).sum())
        assert int(nxt.s.sum()) == 0
        assert moved == (2 if outcome.transferred else 0)
        assert outcome.provider in outcome.available
        assert nxt.t == state.t + 1
        state = nxt


@pytest.mark.parametrize('beta', [None, 0.4])
def test_fast_path_matches_step(beta):
    config = SystemConfig.symmetric(3, d=2, beta=beta, seed=42)
    system = TokenSystem(config)
    for _ in range(500):
        system.step()
    fast = TokenSystem(config).run(500, chunk=64)
    np.testing.assert_array_equal(system.state.s, fast.s)
    assert fast.t == 500


def test_run_observer_sees_every_period():
    seen = []
    TokenSystem(SystemConfig.symmetric(2, seed=1)).run(100, observer=lambda t, k, j: seen.append(t))
    assert seen == list(range(1, 101))


def test_requester_follows_p():
    config = SystemConfig(n=2, p=(0.9, 0.1), q=(0.5, 0.5))
    rng = make_rng(5)
    share = np.mean([sample_requester(config, rng) == 0 for _ in range(5000)])
    assert 0.87 < share < 0.93


def test_spawn_seeds_deterministic():
    assert spawn_seeds(9, 4) == spawn_seeds(9, 4)
    assert len(set(spawn_seeds(9, 4))) == 4


def test_d1_warning(caplog):
    with caplog.at_level(logging.WARNING):
        assert warn_if_unstable(SystemConfig.symmetric(2, d=1))
    assert 'system is not stable for d=1' in caplog.text
    assert not warn_if_unstable(SystemConfig.symmetric(2, d=2))
