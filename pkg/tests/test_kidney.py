import numpy as np
import pytest

from scrip import kidney
from scrip.dynamics import Rule
from scrip.errors import ValidationError
from scrip.kidney import Hospital, Pair, PairPopulation, PopulationConfig

UNIVERSAL = {'patient_abo': {'O': 1.0}, 'donor_abo': {'O': 1.0}, 'pra_mixture': [[1.0, [0.0, 0.0]]]}


@pytest.fixture(scope='module')
def small_population():
    return kidney.generate_population(PopulationConfig(n_pairs=120, n_hospitals=6), seed=3)


def _universal(n_pairs, n_hospitals):
    config = PopulationConfig(n_pairs=n_pairs, n_hospitals=n_hospitals, require_incompatible=False, **UNIVERSAL)
    return kidney.generate_population(config, seed=0)


def test_default_population_shape():
    population = kidney.generate_population(seed=0)
    assert len(population.pairs) == 1881
    assert population.n_hospitals == 84
    assert sum(h.pair_count for h in population.hospitals) == 1881
    assert all(1 <= h.pair_count <= 150 for h in population.hospitals)
    assert [p.id for p in population.pairs] == list(range(1881))


def test_population_is_reproducible(small_population):
    again = kidney.generate_population(PopulationConfig(n_pairs=120, n_hospitals=6), seed=3)
    assert again == small_population
    assert all(0.0 <= p.pra <= 1.0 for p in small_population.pairs)


def test_population_config_validation():
    with pytest.raises(ValidationError):
        PopulationConfig(n_pairs=1000, n_hospitals=2, max_hospital_size=100)
    with pytest.raises(ValidationError):
        PopulationConfig(patient_abo={'Z': 1.0})
    with pytest.raises(ValidationError):
        PopulationConfig(pra_mixture=[[1.0, [0.5, 0.2]]])
    with pytest.raises(ValidationError):
        PopulationConfig.from_dict({'n_pairs': 10, 'n_hospitals': 2, 'regions': 3})
    config = PopulationConfig.from_dict({'n_pairs': 10, 'n_hospitals': 2})
    assert PopulationConfig.from_dict(config.to_dict()) == config


def test_incompatible_pairs_cannot_always_be_drawn():
    config = PopulationConfig(n_pairs=10, n_hospitals=2, **UNIVERSAL)
    with pytest.raises(ValidationError):
        kidney.generate_population(config, seed=0)


def test_orphan_pairs_rejected():
    with pytest.raises(ValidationError):
        PairPopulation([Pair(0, 5, 'O', 'O', 0.0)], [Hospital(0, 1)])


def test_crossmatch_is_keyed_and_memoized(small_population):
    compat = kidney.CompatModel(small_population, seed=11)
    u = compat.crossmatch_uniform(3, 7)
    assert 0.0 <= u < 1.0
    assert kidney.CompatModel(small_population, seed=11).crossmatch_uniform(3, 7) == u
    assert kidney.CompatModel(small_population, seed=12).crossmatch_uniform(3, 7) != u
    result = compat.compatible(3, 7)
    assert compat._cache[(3, 7)] is result
    assert compat.compatible(3, 7) is result


def test_pair_never_matches_its_own_clone(small_population):
    assert small_population.self_incompatible
    compat = kidney.CompatModel(small_population, seed=5)
    assert not any(compat.mutual(p.id, p.id) for p in small_population.pairs)

    pairs, hospitals = [Pair(0, 0, 'O', 'O', 0.0)], [Hospital(0, 1)]
    assert kidney.CompatModel(PairPopulation(pairs, hospitals), seed=5).compatible(0, 0)
    flagged = PairPopulation(pairs, hospitals, self_incompatible=True)
    assert not kidney.CompatModel(flagged, seed=5).compatible(0, 0)


def test_universal_pairs_are_mutually_compatible():
    population = _universal(20, 2)
    compat = kidney.CompatModel(population, seed=0)
    assert all(compat.mutual(a, b) for a in range(20) for b in range(20))


def test_select_partner():
    population = PairPopulation(
        [Pair(0, 0, 'O', 'A', 0.1), Pair(1, 1, 'O', 'A', 0.1), Pair(2, 1, 'O', 'A', 0.1)],
        [Hospital(0, 1), Hospital(1, 2)],
    )
    candidates = [(10, 0), (11, 1), (12, 2)]
    assert kidney.select_partner(candidates, np.array([-2, 2]), population, Rule.MIN_TOKEN, 0.9, 0.9) == 10
    assert kidney.select_partner(candidates, np.array([2, -2]), population, Rule.MIN_TOKEN, 0.0, 0.9) == 12
    assert kidney.select_partner(candidates, np.array([0, 0]), population, Rule.MIN_TOKEN, 0.2, 0.0) == 10
    assert kidney.select_partner(candidates, np.array([0, 0]), population, Rule.MIN_TOKEN, 0.7, 0.0) == 11
    assert kidney.select_partner(candidates, np.array([-2, 2]), population, Rule.UNIFORM, 0.7, 0.0) == 12


def test_universal_pool_alternates():
    result = kidney.run_horizon(_universal(40, 4), Rule.MIN_TOKEN, 100, seed=1, record_every=10)
    assert 40 <= result.diagnostics['matched_arrivals'] <= 50
    assert result.diagnostics['final_pool_size'] <= 1
    assert result.diagnostics['multi_candidate_share'] == 0.0
    assert [day for day, _ in result.pool_sizes] == list(range(10, 101, 10))


def test_single_hospital_pays_itself():
    result = kidney.run_horizon(_universal(30, 1), Rule.MIN_TOKEN, 200, seed=2)
    assert result.diagnostics['matched_arrivals'] > 0
    assert result.ledger.tolist() == [0]
    assert result.max_abs_tokens == 0


def test_ledger_conservation_and_events(small_population):
    result = kidney.run_horizon(small_population, Rule.MIN_TOKEN, 2_000, seed=5, record_every=500, keep_events=True)
    assert int(result.ledger.sum()) == 0
    assert all(int(ledger.sum()) == 0 for _, ledger in result.trajectory)
    assert len(result.trajectory_rows()) == 4 * small_population.n_hospitals
    kinds = {event['event'] for event in result.events}
    assert kinds <= {'arrival', 'match', 'enter', 'depart'}
    assert sum(event['event'] == 'arrival' for event in result.events) == 2_000
    matches = sum(event['event'] == 'match' for event in result.events)
    assert matches == result.diagnostics['matched_arrivals']
    assert set(result.events[0]) == set(kidney.EVENT_HEADER)


def test_run_is_deterministic(small_population):
    first = kidney.run_horizon(small_population, 'uniform', 1_000, seed=9)
    second = kidney.run_horizon(small_population, 'uniform', 1_000, seed=9)
    np.testing.assert_array_equal(first.ledger, second.ledger)
    assert first.diagnostics == second.diagnostics
    with pytest.raises(ValidationError):
        kidney.run_horizon(small_population, Rule.MIN_TOKEN, 0)


def test_rules_share_arrival_streams(small_population):
    min_token = kidney.run_horizon(small_population, Rule.MIN_TOKEN, 1_000, seed=4, keep_events=True)
    uniform = kidney.run_horizon(small_population, Rule.UNIFORM, 1_000, seed=4, keep_events=True)
    arrivals = [[e['pair'] for e in run.events if e['event'] == 'arrival'] for run in (min_token, uniform)]
    assert arrivals[0] == arrivals[1]


def test_compare_rules_layout(small_population):
    comparison = kidney.compare_rules(small_population, 500, seeds=[1, 2])
    assert [run['seed'] for run in comparison['runs']] == [1, 2]
    assert 0.0 <= comparison['min_token_smaller_share'] <= 1.0


@pytest.mark.slow
def test_min_token_keeps_ledgers_tighter():
    population = kidney.generate_population(seed=0)
    comparison = kidney.compare_rules(population, 20_000, seeds=range(5))
    assert comparison['min_token_smaller_share'] >= 0.8


def test_run_day_enters_then_matches():
    population = _universal(10, 2)
    streams = kidney.RunStreams.from_seed(4)
    compat = kidney.CompatModel(population, streams.crossmatch_key)
    pool = kidney.ExchangePool.empty(population.n_hospitals)
    events = []

    first = kidney.run_day(pool, population, Rule.MIN_TOKEN, streams, compat, events)
    assert first.candidates == 0 and first.matched_with is None
    assert pool.clock == 1
    assert events[0]['event'] == 'arrival' and events[1]['event'] == 'enter'

    waiting = dict(pool.waiting)
    second = kidney.run_day(pool, population, Rule.MIN_TOKEN, streams, compat, events)
    assert second.candidates == len(waiting)
    if waiting:
        assert second.matched_with == 0
        assert pool.waiting.get(0) is None
        payer = population.pairs[second.pair].hospital
        provider = population.pairs[waiting[0]].hospital
        expected = np.zeros(2, dtype=np.int64)
        expected[payer] -= 1
        expected[provider] += 1
        assert pool.ledger.tolist() == expected.tolist()
    assert int(pool.ledger.sum()) == 0
    assert pool.clock == 2
