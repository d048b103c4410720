import pytest

from scrip import two_agent
from scrip.errors import UnstableSystemError, ValidationError


def test_symmetric_closed_form():
    solution = two_agent.solve((0.5, 0.5), (0.5, 0.5), d=2)
    assert solution.stable
    assert solution.pi00 == pytest.approx(1.0 / 3.0)
    assert solution.expected_return == pytest.approx(3.0)
    for M in range(8):
        assert solution.tail(M) == pytest.approx((2.0 / 3.0) * (1.0 / 3.0) ** M)
    assert solution.tail(0) + solution.pi00 == pytest.approx(1.0)


def test_decay_constant_symmetric():
    solution = two_agent.solve((0.5, 0.5), (0.5, 0.5), d=2)
    a = two_agent.decay_constant(solution)
    assert a == pytest.approx(0.3334, abs=1e-9)
    for M in range(1, 60):
        assert a ** M >= solution.tail(M)


@pytest.mark.parametrize('p, q, d', [
    ((0.6, 0.4), (0.5, 0.5), 2),
    ((0.7, 0.3), (0.6, 0.4), 2),
    ((0.4, 0.6), (0.55, 0.45), 3),
])
def test_decay_constant_dominates_tail(p, q, d):
    solution = two_agent.solve(p, q, d=d)
    a = two_agent.decay_constant(solution)
    assert 0.0 < a < 1.0
    assert all(a ** M >= solution.tail(M) for M in range(1, 200))


def test_tie_weightings_coincide_for_d2():
    distinct = two_agent.solve((0.7, 0.3), (0.6, 0.4), d=2)
    weighted = two_agent.solve((0.7, 0.3), (0.6, 0.4), d=2, tie_weighting='multiplicity')
    assert distinct.pi00 == pytest.approx(weighted.pi00)
    with pytest.raises(ValidationError):
        two_agent.solve((0.5, 0.5), (0.5, 0.5), d=2, tie_weighting='random')


def test_tie_weightings_differ_for_d3():
    distinct = two_agent.solve((0.6, 0.4), (0.7, 0.3), d=3)
    weighted = two_agent.solve((0.6, 0.4), (0.7, 0.3), d=3, tie_weighting='multiplicity')
    assert distinct.pi00 != pytest.approx(weighted.pi00, abs=1e-6)


def test_unstable_is_typed():
    solution = two_agent.solve((0.2, 0.8), (0.5, 0.5), d=2)
    assert not solution.stable
    assert solution.pi00 is None
    with pytest.raises(UnstableSystemError):
        solution.tail(1)
    assert solution.to_dict() == {'stable': False, 'p': [0.2, 0.8], 'q': [0.5, 0.5], 'd': 2, 'beta': None}


def test_invalid_inputs():
    with pytest.raises(ValidationError):
        two_agent.solve((0.5, 0.6), (0.5, 0.5), d=2)
    with pytest.raises(ValidationError):
        two_agent.solve((1.0, 0.0), (0.5, 0.5), d=2)
    with pytest.raises(ValidationError):
        two_agent.solve((0.5, 0.5), (0.5, 0.5), d=1)
    with pytest.raises(ValidationError):
        two_agent.solve_intermediate((0.5, 0.5), (0.5, 0.5), 0.0)


@pytest.mark.parametrize('beta', [0.25, 0.5, 0.75])
def test_intermediate_symmetric_formula(beta):
    solution = two_agent.solve_intermediate((0.5, 0.5), (0.5, 0.5), beta)
    for M in range(7):
        expected = 1.0 - (2.0 / (2.0 + beta)) * ((2.0 - beta) / (2.0 + beta)) ** M
        assert solution.within(M) == pytest.approx(expected)


def test_intermediate_reduces_to_d2():
    p, q = (0.6, 0.4), (0.45, 0.55)
    full = two_agent.solve(p, q, d=2)
    intermediate = two_agent.solve_intermediate(p, q, 1.0)
    assert intermediate.pi00 == pytest.approx(full.pi00)
    for M in range(6):
        assert intermediate.tail(M) == pytest.approx(full.tail(M))


def test_curves():
    solution = two_agent.solve((0.5, 0.5), (0.5, 0.5), d=2)
    rows = two_agent.tail_curve(solution, 4)
    assert [row['M'] for row in rows] == [0, 1, 2, 3, 4]
    assert all(row['tail'] + row['within'] == pytest.approx(1.0) for row in rows)
    curve = two_agent.beta_curve([0.5, 1.0], [0, 1, 2])
    assert len(curve) == 6
    assert curve[-1]['within'] == pytest.approx(1.0 - (2.0 / 3.0) * (1.0 / 3.0) ** 2)
    data = solution.to_dict(M_max=3)
    assert data['decay_a'] == pytest.approx(0.3334)
    assert len(data['tail']) == 4
