"""
Module de dynamique du système à jetons
Etat, configuration et transition d'une période sous la règle du minimum de jetons
"""

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvariantViolation, ValidationError

logger = logging.getLogger(__name__)

SUM_TOLERANCE = 1e-12
DEFAULT_CHUNK = 65536


class Rule(str, Enum):
    """Règle de sélection du fournisseur"""
    MIN_TOKEN = 'min_token'
    UNIFORM = 'uniform'

    @classmethod
    def parse(cls, value: Any) -> 'Rule':
        if isinstance(value, Rule):
            return value
        key = str(value).strip().lower().replace('-', '_')
        aliases = {'mintoken': 'min_token', 'min': 'min_token'}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValidationError(f"Règle inconnue: {value!r} (attendu: min_token, uniform)")


def make_rng(seed: int) -> np.random.Generator:
    """Générateur PCG64 64 bits, reproductible d'une plateforme à l'autre"""
    return np.random.Generator(np.random.PCG64(seed))


def spawn_seeds(seed: int, count: int) -> List[int]:
    """
    Dérive des graines indépendantes d'une graine maîtresse

    Args:
        seed: Graine maîtresse
        count: Nombre de graines filles

    Returns:
        Liste de graines entières 64 bits
    """
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(child.generate_state(1, np.uint64)[0]) for child in children]


def _as_distribution(name: str, values: Sequence[float], n: int) -> Tuple[float, ...]:
    dist = tuple(float(v) for v in values)
    if len(dist) != n:
        raise ValidationError(f"{name} doit avoir {n} composantes, reçu {len(dist)}")
    if any(not np.isfinite(v) or v <= 0.0 for v in dist):
        raise ValidationError(f"{name} doit être à support plein (toutes les entrées > 0): {dist}")
    total = float(np.sum(dist))
    if abs(total - 1.0) > SUM_TOLERANCE:
        raise ValidationError(f"{name} doit sommer à 1 (somme={total!r})")
    return dist


@dataclass(frozen=True)
class SystemConfig:
    """Le quadruplet (n, P, Q, d) plus la règle, la variante β et la graine"""

    n: int
    p: Tuple[float, ...]
    q: Tuple[float, ...]
    d: int = 2
    rule: Rule = Rule.MIN_TOKEN
    beta: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(self.n, (int, np.integer)) or self.n < 2:
            raise ValidationError(f"n doit être un entier ≥ 2 (reçu {self.n!r})")
        object.__setattr__(self, 'n', int(self.n))
        object.__setattr__(self, 'p', _as_distribution('p', self.p, self.n))
        object.__setattr__(self, 'q', _as_distribution('q', self.q, self.n))
        if isinstance(self.d, bool) or not isinstance(self.d, (int, np.integer)) or self.d < 1:
            raise ValidationError(f"d doit être un entier ≥ 1 (reçu {self.d!r})")
        object.__setattr__(self, 'd', int(self.d))
        object.__setattr__(self, 'rule', Rule.parse(self.rule))
        if self.beta is not None:
            beta = float(self.beta)
            if not 0.0 < beta < 1.0:
                raise ValidationError(f"beta doit être dans (0,1) (reçu {self.beta!r})")
            if self.d != 2:
                raise ValidationError("avec beta, chaque période utilise d=2 ou d=1 : fixer d=2")
            object.__setattr__(self, 'beta', beta)
        seed = int(self.seed)
        if not 0 <= seed < 2 ** 64:
            raise ValidationError(f"la graine doit tenir sur 64 bits non signés (reçu {self.seed!r})")
        object.__setattr__(self, 'seed', seed)

    # ------------------------------------------------------------------
    # Constructeurs
    # ------------------------------------------------------------------

    @classmethod
    def symmetric(cls, n: int, d: int = 2, **kwargs) -> 'SystemConfig':
        """Agents symétriques : p_i = q_i = 1/n"""
        uniform = tuple([1.0 / n] * n)
        return cls(n=n, p=uniform, q=uniform, d=d, **kwargs)

    @classmethod
    def two_type(cls, n: int, f: int, alpha: float, beta_ratio: float, d: int = 2, **kwargs) -> 'SystemConfig':
        """
        Système à deux types : les f premiers agents sont de type A, les autres de type B

        Args:
            n: Nombre total d'agents
            f: Nombre d'agents de type A
            alpha: Rapport p_B / p_A
            beta_ratio: Rapport q_B / q_A
            d: Densité de disponibilité
        """
        if not 0 < f < n:
            raise ValidationError(f"f doit être dans [1, n-1] (reçu {f})")
        p_a = 1.0 / (f + (n - f) * alpha)
        q_a = 1.0 / (f + (n - f) * beta_ratio)
        p = [p_a] * f + [alpha * p_a] * (n - f)
        q = [q_a] * f + [beta_ratio * q_a] * (n - f)
        # on recale la dernière entrée pour une somme exacte à 1e-12 près
        p[-1] = 1.0 - float(np.sum(p[:-1]))
        q[-1] = 1.0 - float(np.sum(q[:-1]))
        return cls(n=n, p=tuple(p), q=tuple(q), d=d, **kwargs)

    def with_seed(self, seed: int) -> 'SystemConfig':
        return SystemConfig(n=self.n, p=self.p, q=self.q, d=self.d, rule=self.rule, beta=self.beta, seed=seed)

    # ------------------------------------------------------------------
    # Sérialisation JSON {n, p, q, d, rule, beta, seed}
    # ------------------------------------------------------------------

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n': self.n,
            'p': list(self.p),
            'q': list(self.q),
            'd': self.d,
            'rule': self.rule.value,
            'beta': self.beta,
            'seed': self.seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SystemConfig':
        missing = [key for key in ('n', 'p', 'q') if key not in data]
        if missing:
            raise ValidationError(f"Clés manquantes dans la configuration du système: {missing}")
        unknown = set(data) - {'n', 'p', 'q', 'd', 'rule', 'beta', 'seed'}
        if unknown:
            raise ValidationError(f"Clés inconnues dans la configuration du système: {sorted(unknown)}")
        return cls(
            n=data['n'],
            p=tuple(data['p']),
            q=tuple(data['q']),
            d=data.get('d', 2),
            rule=data.get('rule', Rule.MIN_TOKEN),
            beta=data.get('beta'),
            seed=data.get('seed', 0),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> 'SystemConfig':
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ValidationError(f"JSON de configuration illisible: {e}")
        return cls.from_dict(data)

    # ------------------------------------------------------------------
    # Disposition des tirages
    # ------------------------------------------------------------------

    @property
    def d_max(self) -> int:
        return 2 if self.beta is not None else self.d

    @property
    def block_width(self) -> int:
        """Nombre d'uniformes consommées par période"""
        return 1 + (1 if self.beta is not None else 0) + self.d_max + 1

    @cached_property
    def cum_p(self) -> np.ndarray:
        return np.cumsum(self.p)

    @cached_property
    def cum_q(self) -> np.ndarray:
        return np.cumsum(self.q)

    @property
    def is_symmetric(self) -> bool:
        return np.allclose(self.p, self.p[0], atol=SUM_TOLERANCE) and np.allclose(self.q, self.q[0], atol=SUM_TOLERANCE)


def warn_if_unstable(config: SystemConfig) -> bool:
    """
    Signale les configurations que l'on sait instables

    Returns:
        True si un avertissement a été émis
    """
    if config.d == 1 and config.beta is None:
        logger.warning(f"system is not stable for d=1 : le système n'est stable pour aucun n ≥ 2 (n={config.n})")
        return True
    if config.rule is Rule.UNIFORM:
        logger.warning("Règle uniforme : aucun retour vers zéro n'est garanti, les écarts croissent")
        return True
    return False


@dataclass
class TokenState:
    """Vecteur de jetons s^t (somme nulle) et indice de temps t"""

    s: np.ndarray
    t: int = 0

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=np.int64)
        if self.t < 0:
            raise ValidationError(f"t doit être ≥ 0 (reçu {self.t})")
        total = int(self.s.sum())
        if total != 0:
            raise InvariantViolation(f"somme des jetons non nulle: {total}")

    @classmethod
    def zeros(cls, n: int) -> 'TokenState':
        return cls(np.zeros(n, dtype=np.int64), 0)

    @property
    def is_zero(self) -> bool:
        return not self.s.any()


@dataclass(frozen=True)
class StepOutcome:
    """Résultat d'une période : demandeur k^t, disponibles I^t, fournisseur j^t"""

    requester: int
    available: Tuple[int, ...]
    provider: int
    transferred: bool


def _index(cum: np.ndarray, u):
    idx = np.searchsorted(cum, u, side='right')
    return np.minimum(idx, len(cum) - 1)


def _available_from_uniforms(config: SystemConfig, u: np.ndarray) -> Tuple[int, ...]:
    if config.beta is not None:
        d_eff = 2 if u[0] < config.beta else 1
        draws = u[1:1 + d_eff]
    else:
        draws = u
    return tuple(int(i) for i in _index(config.cum_q, draws))


def choose_provider(s: Sequence[int], available: Sequence[int], rule: Rule, u: float) -> int:
    """
    Choix du fournisseur à partir d'une uniforme de départage déjà tirée

    Sous MIN_TOKEN, le départage est uniforme sur les agents DISTINCTS à égalité
    (un agent tiré deux fois compte pour un seul candidat).
    """
    if rule is Rule.UNIFORM:
        return available[min(int(u * len(available)), len(available) - 1)]
    if len(available) == 1:
        return available[0]
    if len(available) == 2:
        a, b = available
        if a == b:
            return a
        sa, sb = s[a], s[b]
        if sa != sb:
            return a if sa < sb else b
        lo, hi = (a, b) if a < b else (b, a)
        return lo if u < 0.5 else hi
    best = min(s[i] for i in available)
    tied = sorted({i for i in available if s[i] == best})
    return tied[min(int(u * len(tied)), len(tied) - 1)]


def sample_requester(config: SystemConfig, rng: np.random.Generator) -> int:
    """Tire le demandeur selon P (une seule uniforme consommée)"""
    return int(_index(config.cum_p, rng.random()))


def sample_available(config: SystemConfig, rng: np.random.Generator) -> Tuple[int, ...]:
    """
    Tire les agents disponibles selon Q, indépendamment et avec remise

    Consomme toujours 1 (si β) + d_max uniformes ; avec β, la seconde disponibilité
    est ignorée quand la période n'a qu'un agent disponible.

    Returns:
        Tuple ordonné de d_eff indices d'agents
    """
    width = config.block_width - 2
    return _available_from_uniforms(config, rng.random(width))


def select_provider(state: TokenState, available: Sequence[int], rule: Rule, rng: np.random.Generator) -> int:
    """
    Sélectionne le fournisseur parmi les disponibles (une uniforme consommée)

    Raises:
        ValidationError: si aucun agent n'est disponible
    """
    if len(available) == 0:
        raise ValidationError("select_provider: ensemble de disponibles vide")
    return choose_provider(state.s, tuple(available), Rule.parse(rule), rng.random())


def step(state: TokenState, config: SystemConfig, rng: np.random.Generator) -> Tuple[TokenState, StepOutcome]:
    """
    Une période : le demandeur paie un jeton au fournisseur (sauf s'il se sert lui-même)

    Args:
        state: Etat avant la période
        config: Configuration du système
        rng: Générateur aléatoire

    Returns:
        (nouvel état, résultat de la période)
    """
    requester = sample_requester(config, rng)
    available = sample_available(config, rng)
    provider = select_provider(state, available, config.rule, rng)
    s = state.s.copy()
    transferred = requester != provider
    if transferred:
        s[requester] -= 1
        s[provider] += 1
    outcome = StepOutcome(requester=requester, available=available, provider=provider, transferred=transferred)
    return TokenState(s, state.t + 1), outcome


# Observateur appelé après chaque période : (t, demandeur, fournisseur)
StepObserver = Callable[[int, int, int], None]


class TokenSystem:
    """Classe pour faire évoluer une chaîne de jetons"""

    def __init__(self, config: SystemConfig, rng: Optional[np.random.Generator] = None):
        """
        Initialise la chaîne à l'état nul

        Args:
            config: Configuration du système
            rng: Générateur (par défaut PCG64 initialisé avec config.seed)
        """
        self.config = config
        self.rng = rng if rng is not None else make_rng(config.seed)
        self.state = TokenState.zeros(config.n)

    def step(self) -> StepOutcome:
        self.state, outcome = step(self.state, self.config, self.rng)
        return outcome

    def draw_chunks(self, steps: int, chunk: int = DEFAULT_CHUNK) -> Iterator[Tuple[List[int], List[Tuple[int, ...]], List[float]]]:
        """
        Tire les aléas par blocs, dans le même ordre que des appels répétés à step()

        Yields:
            (demandeurs, disponibles, uniformes de départage) pour chaque bloc
        """
        config = self.config
        remaining = steps
        while remaining > 0:
            k = min(chunk, remaining)
            u = self.rng.random((k, config.block_width))
            requesters = _index(config.cum_p, u[:, 0]).tolist()
            offset = 1
            if config.beta is not None:
                single = (u[:, 1] >= config.beta).tolist()
                offset = 2
            draws = _index(config.cum_q, u[:, offset:offset + config.d_max]).tolist()
            if config.beta is not None:
                available = [(row[0],) if one else tuple(row) for row, one in zip(draws, single)]
            else:
                available = [tuple(row) for row in draws]
            yield requesters, available, u[:, -1].tolist()
            remaining -= k

    def run(self, steps: int, observer: Optional[StepObserver] = None, chunk: int = DEFAULT_CHUNK) -> TokenState:
        """
        Chemin rapide : avance la chaîne de `steps` périodes

        Args:
            steps: Nombre de périodes
            observer: Rappel optionnel après chaque période
            chunk: Taille des blocs de tirages

        Returns:
            L'état final
        """
        rule = self.config.rule
        s = self.state.s.tolist()
        t = self.state.t
        for requesters, available, ties in self.draw_chunks(steps, chunk):
            for k, avail, u in zip(requesters, available, ties):
                j = choose_provider(s, avail, rule, u)
                if k != j:
                    s[k] -= 1
                    s[j] += 1
                t += 1
                if observer is not None:
                    observer(t, k, j)
        self.state = TokenState(np.array(s, dtype=np.int64), t)
        return self.state
