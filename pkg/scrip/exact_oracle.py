"""
Module oracle exact : loi de transition exacte sur un espace d'états tronqué
et distribution stationnaire, pour valider simulations et formules fermées
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse

from .dynamics import Rule, SystemConfig, TokenState
from .errors import ConvergenceError, InfeasibleError, InvariantViolation, ValidationError

logger = logging.getLogger(__name__)

ENUMERATION_GUARD = 1_000_000
STATE_GUARD = 2_000_000
DENSE_LIMIT = 4_000
ROW_TOLERANCE = 1e-12

State = Tuple[int, ...]


def _ordered_draws(n: int, d: int, q: Sequence[float]) -> List[Tuple[Tuple[int, ...], float]]:
    if n ** d > ENUMERATION_GUARD:
        raise InfeasibleError(f"énumération impossible: n^d = {n}^{d} > {ENUMERATION_GUARD}")
    draws = []
    for combo in itertools.product(range(n), repeat=d):
        draws.append((combo, float(np.prod([q[i] for i in combo]))))
    return draws


def _provider_law_for(s: Sequence[int], draws, rule: Rule, n: int) -> np.ndarray:
    law = np.zeros(n)
    for combo, prob in draws:
        if rule is Rule.UNIFORM:
            for agent in combo:
                law[agent] += prob / len(combo)
            continue
        best = min(s[i] for i in combo)
        tied = {i for i in combo if s[i] == best}
        share = prob / len(tied)
        for agent in tied:
            law[agent] += share
    return law


class _LawBuilder:
    """Précalcule les tirages ordonnés une fois pour toute la chaîne"""

    def __init__(self, config: SystemConfig):
        self.config = config
        if config.beta is not None:
            self.mixture = [
                (config.beta, _ordered_draws(config.n, 2, config.q)),
                (1.0 - config.beta, _ordered_draws(config.n, 1, config.q)),
            ]
        else:
            self.mixture = [(1.0, _ordered_draws(config.n, config.d, config.q))]

    def provider_law(self, s: Sequence[int]) -> np.ndarray:
        law = np.zeros(self.config.n)
        for weight, draws in self.mixture:
            law += weight * _provider_law_for(s, draws, self.config.rule, self.config.n)
        return law

    def successors(self, s: Sequence[int]) -> Dict[State, float]:
        provider = self.provider_law(s)
        law: Dict[State, float] = {}
        base = tuple(int(v) for v in s)
        for i, p_i in enumerate(self.config.p):
            for j, r_j in enumerate(provider):
                prob = p_i * r_j
                if prob == 0.0:
                    continue
                if i == j:
                    nxt = base
                else:
                    tmp = list(base)
                    tmp[i] -= 1
                    tmp[j] += 1
                    nxt = tuple(tmp)
                law[nxt] = law.get(nxt, 0.0) + prob
        return law


def one_step_law(state: TokenState, config: SystemConfig) -> Dict[State, float]:
    """
    Loi exacte de l'état suivant

    Enumère demandeur × n-uplets ordonnés de disponibilités, avec départage
    uniforme sur les agents distincts à égalité.

    Raises:
        InfeasibleError: si n^d dépasse la garde d'énumération
    """
    return _LawBuilder(config).successors(state.s.tolist())


@dataclass
class TruncatedChain:
    """Chaîne tronquée à la boîte |s_i| ≤ B (sorties de boîte redirigées en boucle)"""

    config: SystemConfig
    B: int
    states: List[State]
    index: Dict[State, int]
    matrix: scipy.sparse.csr_matrix
    pi: Optional[np.ndarray] = field(default=None, repr=False)
    residual: float = float('nan')


def _enumerate_states(n: int, B: int) -> List[State]:
    if (2 * B + 1) ** (n - 1) > 4 * STATE_GUARD:
        raise InfeasibleError(f"boîte trop grande: n={n}, B={B}")
    states = []
    for head in itertools.product(range(-B, B + 1), repeat=n - 1):
        last = -sum(head)
        if -B <= last <= B:
            states.append(tuple(head) + (last,))
    if len(states) > STATE_GUARD:
        raise InfeasibleError(f"{len(states)} états > {STATE_GUARD}")
    return states


def build_chain(config: SystemConfig, B: int) -> TruncatedChain:
    """
    Construit la matrice de transition tronquée

    Args:
        config: Configuration du système
        B: Rayon de troncature

    Returns:
        TruncatedChain (matrice stochastique par ligne, au format CSR)
    """
    if B < 0:
        raise ValidationError(f"B doit être ≥ 0 (reçu {B})")
    builder = _LawBuilder(config)
    states = _enumerate_states(config.n, B)
    index = {s: k for k, s in enumerate(states)}
    rows, cols, vals = [], [], []
    for k, s in enumerate(states):
        row: Dict[int, float] = {}
        for nxt, prob in builder.successors(s).items():
            target = index.get(nxt, k)
            row[target] = row.get(target, 0.0) + prob
        total = sum(row.values())
        if abs(total - 1.0) > ROW_TOLERANCE:
            raise InvariantViolation(f"ligne {s} non stochastique: somme={total!r}")
        for target, prob in row.items():
            rows.append(k)
            cols.append(target)
            vals.append(prob)
    size = len(states)
    matrix = scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(size, size))
    logger.info(f"Chaîne tronquée construite: n={config.n}, d={config.d}, B={B}, {size} états")
    return TruncatedChain(config=config, B=B, states=states, index=index, matrix=matrix)


def _residual(pi: np.ndarray, matrix: scipy.sparse.csr_matrix) -> float:
    return float(np.max(np.abs(matrix.T @ pi - pi)))


def stationary(chain: TruncatedChain, tol: float = 1e-12, max_iter: int = 500_000,
               dense_limit: int = DENSE_LIMIT) -> np.ndarray:
    """
    Distribution stationnaire π (πP = π, Σπ = 1)

    Résolution dense si la chaîne est petite, sinon itération de la puissance
    avec arrêt d'Aitken ; raffinement par itérations si le résidu dépasse tol.

    Raises:
        ConvergenceError: si le plafond d'itérations est atteint
    """
    size = len(chain.states)
    if size == 1:
        chain.pi, chain.residual = np.ones(1), 0.0
        return chain.pi

    matrix = chain.matrix
    if size <= dense_limit:
        system = matrix.T.toarray() - np.eye(size)
        system[-1, :] = 1.0
        rhs = np.zeros(size)
        rhs[-1] = 1.0
        pi = scipy.linalg.solve(system, rhs)
        pi = np.clip(pi, 0.0, None)
        pi /= pi.sum()
    else:
        pi = np.full(size, 1.0 / size)

    residual = _residual(pi, matrix)
    previous_delta = None
    iteration = 0
    transposed = matrix.T.tocsr()
    while residual > tol:
        if iteration >= max_iter:
            raise ConvergenceError(f"itération de la puissance non convergée après {max_iter} itérations", residual)
        nxt = transposed @ pi
        nxt /= nxt.sum()
        delta = float(np.abs(nxt - pi).sum())
        pi = nxt
        iteration += 1
        if previous_delta is not None and previous_delta > 0:
            ratio = delta / previous_delta
            if ratio < 1.0 and delta * ratio / (1.0 - ratio) < tol:
                residual = _residual(pi, matrix)
                if residual <= tol:
                    break
        previous_delta = delta
        if iteration % 1000 == 0:
            residual = _residual(pi, matrix)
            logger.debug(f"itération {iteration}: résidu={residual:.3e}")
    residual = _residual(pi, matrix)
    if residual > tol:
        raise ConvergenceError("distribution stationnaire imprécise", residual)
    chain.pi, chain.residual = pi, residual
    logger.info(f"Distribution stationnaire calculée ({size} états, résidu={residual:.2e}, {iteration} itération(s))")
    return pi


def _ensure_pi(chain: TruncatedChain) -> np.ndarray:
    if chain.pi is None:
        stationary(chain)
    return chain.pi


def marginal(chain: TruncatedChain, agent: int) -> Dict[int, float]:
    """Loi stationnaire de s_agent"""
    pi = _ensure_pi(chain)
    law: Dict[int, float] = {}
    for state, mass in zip(chain.states, pi):
        law[state[agent]] = law.get(state[agent], 0.0) + float(mass)
    return dict(sorted(law.items()))


def tail_abs(chain: TruncatedChain, agent: int, M: int) -> float:
    """P_π(|s_agent| > M)"""
    return float(sum(mass for value, mass in marginal(chain, agent).items() if abs(value) > M))


def expected_return_time(chain: TruncatedChain, state: Sequence[int]) -> float:
    """
    Temps moyen de retour à un état : 1/π(état)

    Raises:
        ValidationError: si l'état est hors de la boîte
    """
    key = tuple(int(v) for v in state)
    if key not in chain.index:
        raise ValidationError(f"état {key} hors de la boîte B={chain.B}")
    pi = _ensure_pi(chain)
    return 1.0 / float(pi[chain.index[key]])


def marginal_rows(chain: TruncatedChain) -> List[Dict[str, float]]:
    """Lignes CSV token_value,agent,probability"""
    rows = []
    for agent in range(chain.config.n):
        for value, mass in marginal(chain, agent).items():
            rows.append({'token_value': value, 'agent': agent, 'probability': mass})
    return rows
