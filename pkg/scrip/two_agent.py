"""
Module deux agents : quantités stationnaires en forme fermée pour n=2
(disponibilité d fixe, disponibilité intermédiaire β, constante de décroissance)
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import UnstableSystemError, ValidationError

logger = logging.getLogger(__name__)

GRID_STEP = 1e-4
DEFAULT_M_CAP = 200


@dataclass(frozen=True)
class TwoAgentSolution:
    """Solution fermée : π_(0,0), temps de retour, coefficients c_1, c_2 et raisons x, y"""

    stable: bool
    p: Tuple[float, float]
    q: Tuple[float, float]
    d: Optional[int] = None
    beta: Optional[float] = None
    pi00: Optional[float] = None
    expected_return: Optional[float] = None
    x: Optional[float] = None
    y: Optional[float] = None
    c1: Optional[float] = None
    c2: Optional[float] = None

    def _require_stable(self):
        if not self.stable:
            raise UnstableSystemError(f"système instable (p={self.p}, q={self.q}, d={self.d}, beta={self.beta})")

    def tail(self, M: int) -> float:
        """P_π(|s_i| > M), identique pour i=1,2"""
        self._require_stable()
        if M < 0:
            raise ValidationError(f"M doit être ≥ 0 (reçu {M})")
        return self.c1 * self.x ** M + self.c2 * self.y ** M

    def within(self, M: int) -> float:
        """P_π(|s_i| ≤ M)"""
        return 1.0 - self.tail(M)

    def to_dict(self, M_max: int = 10) -> Dict:
        data = {'stable': self.stable, 'p': list(self.p), 'q': list(self.q), 'd': self.d, 'beta': self.beta}
        if self.stable:
            data.update({
                'pi00': self.pi00,
                'expected_return': self.expected_return,
                'decay_a': decay_constant(self),
                'tail': [[M, self.tail(M)] for M in range(M_max + 1)],
            })
        return data


def _pair(name: str, values: Sequence[float]) -> Tuple[float, float]:
    pair = tuple(float(v) for v in values)
    if len(pair) != 2 or any(v <= 0.0 for v in pair) or abs(sum(pair) - 1.0) > 1e-12:
        raise ValidationError(f"{name} doit être une loi à deux points de support plein: {values}")
    return pair


def _zero_state_weight(q1: float, q2: float, d: int, tie_weighting: str) -> float:
    """Probabilité que l'agent 1 fournisse depuis l'état (0,0)"""
    if tie_weighting == 'multiplicity':
        return q1
    if tie_weighting != 'distinct':
        raise ValidationError(f"tie_weighting inconnu: {tie_weighting!r}")
    both = 1.0 - q1 ** d - q2 ** d
    return q1 ** d + 0.5 * both


def solve(p: Sequence[float], q: Sequence[float], d: int, tie_weighting: str = 'distinct') -> TwoAgentSolution:
    """
    Résout la chaîne de naissance-mort à deux agents

    Args:
        p: Loi des demandes (p_1, p_2)
        q: Loi des disponibilités (q_1, q_2)
        d: Densité de disponibilité (≥ 2)
        tie_weighting: 'distinct' (règle du simulateur) ou 'multiplicity' (poids i/d)

    Returns:
        TwoAgentSolution ; stable=False si q_1^d ≥ p_1 ou q_2^d ≥ p_2
    """
    p1, p2 = _pair('p', p)
    q1, q2 = _pair('q', q)
    if d < 2:
        raise ValidationError(f"d doit être ≥ 2 pour la forme fermée (reçu {d})")
    stable = q1 ** d < p1 and q2 ** d < p2
    if not stable:
        logger.info(f"Deux agents instables: q1^d={q1 ** d:.4g} vs p1={p1}, q2^d={q2 ** d:.4g} vs p2={p2}")
        return TwoAgentSolution(stable=False, p=(p1, p2), q=(q1, q2), d=d)
    w1 = _zero_state_weight(q1, q2, d, tie_weighting)
    w2 = _zero_state_weight(q2, q1, d, tie_weighting)
    k1 = p2 * w1 / (p1 - q1 ** d)
    k2 = p1 * w2 / (p2 - q2 ** d)
    denominator = 1.0 + k1 + k2
    return TwoAgentSolution(
        stable=True, p=(p1, p2), q=(q1, q2), d=d,
        pi00=1.0 / denominator,
        expected_return=denominator,
        x=p2 * q1 ** d / (p1 * (1.0 - q1 ** d)),
        y=p1 * q2 ** d / (p2 * (1.0 - q2 ** d)),
        c1=k1 / denominator,
        c2=k2 / denominator,
    )


def solve_intermediate(p: Sequence[float], q: Sequence[float], beta: float) -> TwoAgentSolution:
    """
    Disponibilité intermédiaire : d=2 avec probabilité β, d=1 sinon

    Args:
        p: Loi des demandes
        q: Loi des disponibilités
        beta: Probabilité d'avoir deux agents disponibles, dans (0,1]

    Returns:
        TwoAgentSolution (d=None, beta renseigné)
    """
    p1, p2 = _pair('p', p)
    q1, q2 = _pair('q', q)
    if not 0.0 < beta <= 1.0:
        raise ValidationError(f"beta doit être dans (0,1] (reçu {beta})")
    d = 2
    up1 = beta * p2 * q1 ** d + (1 - beta) * p2 * q1
    down1 = beta * p1 * (1 - q1 ** d) + (1 - beta) * p1 * q2
    up2 = beta * p1 * q2 ** d + (1 - beta) * p1 * q2
    down2 = beta * p2 * (1 - q2 ** d) + (1 - beta) * p2 * q1
    x, y = up1 / down1, up2 / down2
    if not (x < 1.0 and y < 1.0):
        logger.info(f"Disponibilité intermédiaire instable: x={x:.4g}, y={y:.4g}")
        return TwoAgentSolution(stable=False, p=(p1, p2), q=(q1, q2), beta=beta)
    k1 = p2 * q1 / (beta * (p1 - q1 ** d) + (1 - beta) * (p1 * q2 - p2 * q1))
    k2 = p1 * q2 / (beta * (p2 - q2 ** d) + (1 - beta) * (p2 * q1 - p1 * q2))
    denominator = 1.0 + k1 + k2
    return TwoAgentSolution(
        stable=True, p=(p1, p2), q=(q1, q2), beta=beta,
        pi00=1.0 / denominator,
        expected_return=denominator,
        x=x, y=y,
        c1=k1 / denominator,
        c2=k2 / denominator,
    )


def decay_constant(solution: TwoAgentSolution, M_cap: int = DEFAULT_M_CAP, grid_step: float = GRID_STEP) -> float:
    """
    Plus petite constante a ∈ (0,1) avec a^M ≥ c_1 x^M + c_2 y^M pour tout M ≥ 1

    Le maximum de (c_1 x^M + c_2 y^M)^(1/M) sur M ≤ M_cap, borné par max(x, y), certifie
    toutes les valeurs de M puisque c_1 + c_2 < 1. La valeur est arrondie par excès sur
    la grille, et jamais au-dessus de x + y quand x + y < 1.
    """
    solution._require_stable()
    x, y, c1, c2 = solution.x, solution.y, solution.c1, solution.c2
    M = np.arange(1, M_cap + 1, dtype=np.float64)
    with np.errstate(under='ignore', divide='ignore'):
        log_terms = np.logaddexp(math.log(c1) + M * math.log(x), math.log(c2) + M * math.log(y))
    exact = max(max(x, y), float(np.max(np.exp(log_terms / M))))
    snapped = math.ceil(exact / grid_step - 1e-9) * grid_step
    a = snapped if exact < snapped < 1.0 else exact
    if x + y < 1.0:
        a = min(a, x + y)
    return a


def tail_curve(solution: TwoAgentSolution, M_max: int) -> List[Dict[str, float]]:
    """Lignes CSV M,tail,within"""
    return [{'M': M, 'tail': solution.tail(M), 'within': solution.within(M)} for M in range(M_max + 1)]


def beta_curve(betas: Sequence[float], M_values: Sequence[int],
               p: Sequence[float] = (0.5, 0.5), q: Sequence[float] = (0.5, 0.5)) -> List[Dict[str, float]]:
    """Famille P(|s_i| ≤ M) en fonction de β"""
    rows = []
    for beta in betas:
        solution = solve_intermediate(p, q, beta)
        for M in M_values:
            rows.append({'beta': beta, 'M': M, 'within': solution.within(M) if solution.stable else float('nan')})
    return rows
