import numpy as np
import pytest

from scrip import mean_field, monte_carlo, two_type
from scrip.acceptance import TWO_TYPE_TARGETS
from scrip.errors import ValidationError
from scrip.mean_field import MeanFieldState
from scrip.two_type import TwoTypeMeanFieldState


def _decreasing(rng, size):
    return np.sort(rng.random(size))[::-1]


def test_state_validation():
    with pytest.raises(ValidationError):
        TwoTypeMeanFieldState(-2, 2, np.ones(5), np.ones(5), alpha=0.0, beta_ratio=1.0)
    with pytest.raises(ValidationError):
        TwoTypeMeanFieldState(-2, 2, np.ones(5), np.ones(4), alpha=1.0, beta_ratio=1.0)
    with pytest.raises(ValidationError):
        TwoTypeMeanFieldState(1, 2, np.ones(2), np.ones(2), alpha=1.0, beta_ratio=1.0)


@pytest.mark.parametrize('alpha, beta_ratio', [(1.0, 1.0), (10.0, 10.0), (2.0, 0.5)])
def test_requester_and_provider_laws_sum_to_one(alpha, beta_ratio):
    rng = np.random.default_rng(4)
    state = TwoTypeMeanFieldState(-6, 6, _decreasing(rng, 13), _decreasing(rng, 13), alpha, beta_ratio)
    prob = two_type.two_type_probabilities(state)
    assert prob['cA'].shape == (14,)
    assert prob['cA'].sum() + prob['cB'].sum() == pytest.approx(1.0)
    assert prob['dA'].sum() + prob['dB'].sum() == pytest.approx(1.0)
    assert prob['cA'].sum() == pytest.approx(1.0 / (1.0 + alpha))


def test_identical_types_reduce_to_single_type():
    rng = np.random.default_rng(9)
    z = _decreasing(rng, 21)
    state = TwoTypeMeanFieldState(-10, 10, z, z.copy(), alpha=1.0, beta_ratio=1.0)
    drift_a, drift_b = two_type.two_type_drift(state)
    single = mean_field.drift(MeanFieldState(-10, 10, z))
    np.testing.assert_allclose(drift_a + drift_b, single, atol=1e-14)
    np.testing.assert_allclose(drift_a, drift_b, atol=1e-14)


def test_equal_ratios_scale_single_type_drift():
    rng = np.random.default_rng(12)
    z = _decreasing(rng, 21)
    state = TwoTypeMeanFieldState(-10, 10, z, z.copy(), alpha=10.0, beta_ratio=10.0)
    drift_a, drift_b = two_type.two_type_drift(state)
    single = mean_field.drift(MeanFieldState(-10, 10, z))
    np.testing.assert_allclose(drift_a, single / 11.0, atol=1e-13)
    np.testing.assert_allclose(drift_b, 10.0 * single / 11.0, atol=1e-13)


def test_joint_mass_is_conserved():
    state = TwoTypeMeanFieldState.step_initial(10.0, 10.0)
    trajectory = two_type.two_type_integrate(state, T=5.0, dt=0.02, record_every=50)
    assert np.abs(trajectory.masses).max() < 1e-10
    assert len(trajectory.times) == 6
    final = trajectory.final()
    assert np.all(np.diff(final.zA) <= 1e-9)
    assert np.all(np.diff(final.zB) <= 1e-9)


def test_identical_types_reach_single_type_equilibrium():
    eq = mean_field.solve_equilibrium(2)
    tails = two_type.two_type_equilibrium_tails(1.0, 1.0, M_max=4, T=300.0)
    for M in range(1, 5):
        assert tails['A'][M] == pytest.approx(eq.p_inf(M), abs=1e-3)
        assert tails['B'][M] == pytest.approx(eq.p_inf(M), abs=1e-3)


def test_within_outside_window():
    state = TwoTypeMeanFieldState.step_initial(1.0, 1.0, lo=-3, hi=3)
    assert state.within(0) == (1.0, 1.0)
    assert state.within(10) == (1.0, 1.0)


def test_integrate_rejects_bad_step():
    with pytest.raises(ValidationError):
        two_type.two_type_integrate(TwoTypeMeanFieldState.step_initial(1.0, 1.0), T=10.0, dt=0.0)


@pytest.mark.slow
def test_equal_ratios_collapse_to_single_type_equilibrium():
    eq = mean_field.solve_equilibrium(2)
    tails = two_type.two_type_equilibrium_tails(10.0, 10.0)
    for kind in ('A', 'B'):
        for M in range(1, 5):
            assert tails[kind][M] == pytest.approx(eq.p_inf(M), abs=1e-3)


@pytest.mark.slow
def test_simulated_two_type_tables():
    simulated = monte_carlo.two_type_tails(10, 4, 10.0, 10.0, T=2_000_000, burn_in=200_000, seed=0)
    for kind, targets in TWO_TYPE_TARGETS.items():
        for M, target in targets.items():
            assert abs(simulated[kind][M] - target) <= 0.03
