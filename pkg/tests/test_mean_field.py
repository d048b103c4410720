import logging

import numpy as np
import pytest

from scrip import mean_field
from scrip.errors import ValidationError
from scrip.mean_field import MeanFieldState


@pytest.fixture(scope='module')
def equilibrium():
    return mean_field.solve_equilibrium(2)


def test_state_validation():
    with pytest.raises(ValidationError):
        MeanFieldState(0, 5, np.zeros(6))
    with pytest.raises(ValidationError):
        MeanFieldState(-2, 2, np.zeros(4))
    state = MeanFieldState.step_initial(-3, 3)
    assert state.at(-10) == 1.0
    assert state.at(10) == 0.0
    assert state.is_valid()


def test_empirical_state_from_tokens():
    state = MeanFieldState.from_tokens([-1, 0, 1], lo=-2, hi=2)
    np.testing.assert_allclose(state.z, [1.0, 1.0, 2.0 / 3.0, 1.0 / 3.0, 0.0])
    assert mean_field.mass(state) == pytest.approx(0.0, abs=1e-15)


def test_balance_residual_brackets_root():
    assert mean_field.balance_residual(0.5) < 0.0 < mean_field.balance_residual(0.75)
    with pytest.raises(ValidationError):
        mean_field.balance_residual(1.0)


def test_equilibrium_values(equilibrium):
    assert 0.66 <= equilibrium.pi0 <= 0.68
    assert abs(equilibrium.residual) < 1e-12
    assert 0.970 <= equilibrium.pi(-4) <= 0.980
    assert equilibrium.pi(1) == pytest.approx(equilibrium.pi0 ** 2)
    assert abs(equilibrium.p_inf(1) - 0.6184) < 0.02
    values = [equilibrium.p_inf(M) for M in range(1, 8)]
    assert values == sorted(values)


def test_equilibrium_is_fixed_point(equilibrium):
    assert np.abs(mean_field.drift(equilibrium.window())).max() < 1e-12
    assert mean_field.mass(equilibrium.window()) == pytest.approx(0.0, abs=1e-9)


def test_equilibrium_higher_d():
    eq = mean_field.solve_equilibrium(3)
    assert 0.0 < eq.pi0 < 1.0
    assert abs(eq.residual) < 1e-12
    assert np.abs(mean_field.drift(eq.window())).max() < 1e-12
    with pytest.raises(ValidationError):
        mean_field.solve_equilibrium(1)


def test_half_bound(equilibrium):
    report = mean_field.verify_half_bound(equilibrium, M_max=40)
    assert report.passed
    assert report.minimum >= 0.0
    assert set(report.values) == set(range(1, 41))
    with pytest.raises(ValidationError):
        mean_field.verify_half_bound(mean_field.solve_equilibrium(3))


def test_mass_is_conserved():
    trajectory = mean_field.integrate(MeanFieldState.step_initial(), T=5.0, dt=0.01, record_every=50)
    assert np.abs(trajectory.masses).max() < 1e-10
    assert len(trajectory.times) == 11
    assert trajectory.final().is_valid()
    rows = trajectory.rows()
    assert len(rows) == 11 * (mean_field.DEFAULT_HI - mean_field.DEFAULT_LO + 1)


def test_converges_to_equilibrium(equilibrium):
    trajectory = mean_field.integrate(MeanFieldState.step_initial(), T=200.0, dt=0.01)
    assert float(np.abs(trajectory.final().z - equilibrium.window().z).sum()) < 1e-4
    assert np.abs(trajectory.masses).max() < 1e-8


def test_narrow_window_warns(caplog):
    with caplog.at_level(logging.WARNING):
        mean_field.integrate(MeanFieldState.step_initial(-2, 2), T=5.0)
    assert 'trop étroite' in caplog.text


def test_integrate_rejects_bad_horizon():
    with pytest.raises(ValidationError):
        mean_field.integrate(MeanFieldState.step_initial(), T=0.0)


def test_lipschitz_spot_check():
    ratio = mean_field.lipschitz_spot_check(d=2, samples=2_000, seed=1)
    assert 0.0 < ratio <= 6.0
    state = mean_field.random_state(np.random.default_rng(0), -5, 5, 2)
    assert state.is_valid()
