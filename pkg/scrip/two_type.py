"""
Module champ moyen à deux types (A et B, n/2 agents chacun, d=2)
p_B = α p_A et q_B = β q_A
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from .errors import ValidationError
from .mean_field import DEFAULT_HI, DEFAULT_LO, _clamp, _rk4

logger = logging.getLogger(__name__)

DEFAULT_T = 1000.0
DEFAULT_DT = 0.02


@dataclass
class TwoTypeMeanFieldState:
    """Fractions de queue par type sur une fenêtre commune [lo, hi]"""

    lo: int
    hi: int
    zA: np.ndarray
    zB: np.ndarray
    alpha: float
    beta_ratio: float

    def __post_init__(self):
        if not self.lo < 0 < self.hi:
            raise ValidationError(f"fenêtre invalide (lo={self.lo}, hi={self.hi})")
        if self.alpha <= 0 or self.beta_ratio <= 0:
            raise ValidationError(f"alpha et beta_ratio doivent être > 0 (reçu {self.alpha}, {self.beta_ratio})")
        size = self.hi - self.lo + 1
        self.zA = np.asarray(self.zA, dtype=np.float64)
        self.zB = np.asarray(self.zB, dtype=np.float64)
        if self.zA.shape != (size,) or self.zB.shape != (size,):
            raise ValidationError(f"zA et zB doivent avoir {size} composantes")

    @classmethod
    def step_initial(cls, alpha: float, beta_ratio: float, lo: int = DEFAULT_LO, hi: int = DEFAULT_HI) -> 'TwoTypeMeanFieldState':
        z = (np.arange(lo, hi + 1) <= 0).astype(np.float64)
        return cls(lo, hi, z.copy(), z.copy(), alpha, beta_ratio)

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    def stacked(self) -> np.ndarray:
        return np.concatenate((self.zA, self.zB))

    def with_stacked(self, v: np.ndarray) -> 'TwoTypeMeanFieldState':
        size = self.hi - self.lo + 1
        return TwoTypeMeanFieldState(self.lo, self.hi, v[:size], v[size:], self.alpha, self.beta_ratio)

    def within(self, M: int) -> Tuple[float, float]:
        """P(|s| ≤ M) pour un agent de type A et de type B"""
        def tail(z):
            left = 1.0 if -M < self.lo else z[-M - self.lo]
            right = 0.0 if M + 1 > self.hi else z[M + 1 - self.lo]
            return float(left - right)
        return tail(self.zA), tail(self.zB)


def two_type_probabilities(state: TwoTypeMeanFieldState) -> Dict[str, np.ndarray]:
    """
    Probabilités c (demandeur) et d (fournisseur) par type et par nombre de jetons

    Les tableaux couvrent les nombres de jetons k ∈ [lo-1, hi] (z_{lo-1}=1, z_{hi+1}=0).
    """
    alpha, beta = state.alpha, state.beta_ratio
    zA = np.concatenate(([1.0], state.zA, [0.0]))
    zB = np.concatenate(([1.0], state.zB, [0.0]))
    dA_k = zA[:-1] - zA[1:]
    dB_k = zB[:-1] - zB[1:]
    wA = 1.0 / (1.0 + beta)
    wB = beta / (1.0 + beta)
    cross = 2.0 * wA * wB
    return {
        'cA': dA_k / (1.0 + alpha),
        'cB': alpha * dB_k / (1.0 + alpha),
        'dA': wA ** 2 * (zA[:-1] ** 2 - zA[1:] ** 2) + cross * dA_k * zB[1:] + cross * dA_k * dB_k * 0.5,
        'dB': wB ** 2 * (zB[:-1] ** 2 - zB[1:] ** 2) + cross * dB_k * zA[1:] + cross * dA_k * dB_k * 0.5,
    }


def two_type_drift(state: TwoTypeMeanFieldState) -> Tuple[np.ndarray, np.ndarray]:
    """dz_i^A/dt = -c_i^A + d_{i-1}^A et dz_i^B/dt = -c_i^B + d_{i-1}^B"""
    prob = two_type_probabilities(state)
    drift_a = -prob['cA'][1:] + prob['dA'][:-1]
    drift_b = -prob['cB'][1:] + prob['dB'][:-1]
    return drift_a, drift_b


def joint_mass(state: TwoTypeMeanFieldState) -> float:
    """Nombre moyen de jetons cumulé des deux types (nul le long des trajectoires)"""
    positive = state.indices >= 1
    total = 0.0
    for z in (state.zA, state.zB):
        total += math.fsum(z[positive]) - math.fsum(1.0 - z[~positive])
    return total


@dataclass
class TwoTypeTrajectory:
    times: np.ndarray
    zA: np.ndarray
    zB: np.ndarray
    masses: np.ndarray
    template: TwoTypeMeanFieldState

    def final(self) -> TwoTypeMeanFieldState:
        t = self.template
        return TwoTypeMeanFieldState(t.lo, t.hi, self.zA[-1], self.zB[-1], t.alpha, t.beta_ratio)


def two_type_integrate(state: TwoTypeMeanFieldState, T: float = DEFAULT_T, dt: float = DEFAULT_DT,
                       record_every: int = 500) -> TwoTypeTrajectory:
    """
    Intègre le système à deux types (RK4), en conservant la masse jointe

    Args:
        state: Etat initial
        T: Horizon
        dt: Pas
        record_every: Pas entre deux enregistrements
    """
    if T <= 0 or dt <= 0:
        raise ValidationError(f"T et dt doivent être > 0 (T={T}, dt={dt})")
    size = state.hi - state.lo + 1

    def field(v: np.ndarray) -> np.ndarray:
        drift_a, drift_b = two_type_drift(state.with_stacked(v))
        return np.concatenate((drift_a, drift_b))

    v = state.stacked()
    steps = int(round(T / dt))
    times, zA, zB, masses = [0.0], [state.zA.copy()], [state.zB.copy()], [joint_mass(state)]
    for k in range(1, steps + 1):
        v = _rk4(v, dt, field)
        v = np.concatenate((_clamp(v[:size], 'two_type A', k * dt), _clamp(v[size:], 'two_type B', k * dt)))
        if k % record_every == 0 or k == steps:
            current = state.with_stacked(v)
            times.append(k * dt)
            zA.append(current.zA.copy())
            zB.append(current.zB.copy())
            masses.append(joint_mass(current))
    return TwoTypeTrajectory(np.array(times), np.array(zA), np.array(zB), np.array(masses), state)


def two_type_equilibrium_tails(alpha: float, beta_ratio: float, M_max: int = 4, T: float = DEFAULT_T,
                               dt: float = DEFAULT_DT) -> Dict[str, Dict[int, float]]:
    """
    Queues stationnaires par type obtenues en intégrant depuis la condition initiale en marche

    Returns:
        {'A': {M: P(|s| ≤ M)}, 'B': {...}}
    """
    trajectory = two_type_integrate(TwoTypeMeanFieldState.step_initial(alpha, beta_ratio), T, dt)
    final = trajectory.final()
    result: Dict[str, Dict[int, float]] = {'A': {}, 'B': {}}
    for M in range(1, M_max + 1):
        a, b = final.within(M)
        result['A'][M] = a
        result['B'][M] = b
    logger.info(f"Deux types (α={alpha}, β={beta_ratio}): A={result['A']}, B={result['B']}")
    return result
