"""
Module de réduction par groupes : un système p = q rationnel (système d'origine) devient
un système symétrique de N agents répartis en groupes (système groupé)
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce as fold
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .dynamics import Rule, SystemConfig, TokenSystem, choose_provider
from .errors import InvariantViolation, ValidationError

logger = logging.getLogger(__name__)

MAX_DENOMINATOR = 1_000_000
FLOAT_TOLERANCE = 1e-12

Rational = Union[Fraction, int, float, str]


def _to_fraction(value: Rational) -> Fraction:
    """
    Convertit une entrée en rationnel exact

    Les flottants sont remplacés par le rationnel de dénominateur ≤ MAX_DENOMINATOR
    le plus proche, à condition d'en être à moins de FLOAT_TOLERANCE.
    """
    if isinstance(value, bool):
        raise ValidationError(f"valeur booléenne refusée: {value!r}")
    if isinstance(value, (Fraction, int)):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            raise ValidationError(f"rationnel illisible: {value!r}")
    number = float(value)
    if not math.isfinite(number):
        raise ValidationError(f"valeur non finie: {value!r}")
    approx = Fraction(number).limit_denominator(MAX_DENOMINATOR)
    if abs(float(approx) - number) > FLOAT_TOLERANCE:
        raise ValidationError(
            f"{value!r} n'a pas de forme rationnelle à petit dénominateur ; "
            f"la réduction ne couvre que les taux rationnels (passer p sous forme 'a/b')"
        )
    return approx


@dataclass
class GroupedSystem:
    """Groupes G_i de g_i agents symétriques, avec g_i / g_j = p_i / p_j"""

    groups: List[Tuple[int, int]]
    N: int
    member_of: List[int]
    rates: List[Fraction] = field(default_factory=list)

    @property
    def sizes(self) -> List[int]:
        return [g for _, g in self.groups]

    def members(self, group: int) -> List[int]:
        return [k for k, owner in enumerate(self.member_of) if owner == group]

    def system_one_config(self, seed: int = 0) -> SystemConfig:
        """Le système d'origine correspondant (p_i = q_i = g_i / N, d=2)"""
        if len(self.groups) < 2:
            raise ValidationError("un seul groupe : pas de système d'origine à au moins deux agents")
        p = [g / self.N for g in self.sizes]
        p[-1] = 1.0 - float(np.sum(p[:-1]))
        return SystemConfig(n=len(self.groups), p=tuple(p), q=tuple(p), d=2, seed=seed)

    def to_dict(self) -> Dict:
        return {
            'groups': [{'agent': agent, 'size': size} for agent, size in self.groups],
            'N': self.N,
            'member_of': self.member_of,
            'p': [str(r) for r in self.rates],
        }


def reduce(p: Sequence[Rational], q: Optional[Sequence[Rational]] = None, normalize: bool = False) -> GroupedSystem:
    """
    Réduit un système p = q rationnel à un système symétrique groupé

    Args:
        p: Taux de demande rationnels
        q: Taux de disponibilité (doivent être égaux à p ; par défaut q = p)
        normalize: Divise p (et q) par leur somme avant réduction

    Returns:
        GroupedSystem avec les tailles de groupes minimales

    Raises:
        ValidationError: taux non rationnels, non positifs, de somme ≠ 1 ou p ≠ q
    """
    rates = [_to_fraction(v) for v in p]
    if not rates:
        raise ValidationError("p est vide")
    if any(r <= 0 for r in rates):
        raise ValidationError(f"tous les p_i doivent être > 0: {[str(r) for r in rates]}")
    if q is not None:
        other = [_to_fraction(v) for v in q]
        if other != rates:
            raise ValidationError("la réduction par groupes exige p_i = q_i pour tout i")
    total = sum(rates, Fraction(0))
    if normalize:
        rates = [r / total for r in rates]
    elif total != 1:
        raise ValidationError(f"p doit sommer exactement à 1 (somme={total})")

    common = fold(math.lcm, (r.denominator for r in rates), 1)
    sizes = [int(r * common) for r in rates]
    divisor = fold(math.gcd, sizes)
    sizes = [g // divisor for g in sizes]
    member_of = [group for group, g in enumerate(sizes) for _ in range(g)]
    gs = GroupedSystem(
        groups=list(enumerate(sizes)),
        N=sum(sizes),
        member_of=member_of,
        rates=rates,
    )
    logger.info(f"Réduction: g={sizes}, N={gs.N}")
    return gs


@dataclass
class GroupedRun:
    """Trajectoire au niveau des groupes (= système d'origine) et audit de l'égalité intra-groupe"""

    T: int
    final_groups: np.ndarray
    final_members: np.ndarray
    zero_returns: List[int]
    checks: int
    trajectory: List[Tuple[int, List[int]]]

    def running_mean_drift(self) -> float:
        """Ecart relatif entre la moyenne des écarts de retour sur la première moitié et sur tout le run"""
        gaps = np.asarray(self.zero_returns, dtype=np.float64)
        if gaps.size < 2:
            return float('nan')
        half = gaps[: gaps.size // 2]
        return abs(float(half.mean()) - float(gaps.mean())) / float(gaps.mean())


def simulate_grouped(gs: GroupedSystem, T: int, seed: int = 0, record_every: int = 0) -> GroupedRun:
    """
    Fait tourner le système groupé et vérifie à chaque période l'égalité intra-groupe

    Un transfert entre groupes retire un jeton à chaque membre du groupe du demandeur
    et en ajoute un à chaque membre du groupe du fournisseur.

    Args:
        gs: Système groupé
        T: Nombre de périodes
        seed: Graine
        record_every: Période d'échantillonnage de la trajectoire (0 = final seulement)

    Raises:
        InvariantViolation: si deux membres d'un même groupe divergent
    """
    if T < 1:
        raise ValidationError(f"T doit être ≥ 1 (reçu {T})")
    groups = len(gs.groups)
    values = [0] * groups
    trajectory: List[Tuple[int, List[int]]] = []
    if gs.N < 2:
        # un seul agent : il se sert toujours lui-même
        zero_returns = [1] * T
        if record_every:
            trajectory = [(t, [0]) for t in range(record_every, T + 1, record_every)]
        return GroupedRun(T, np.zeros(groups, dtype=np.int64), np.zeros(gs.N, dtype=np.int64),
                          zero_returns, T, trajectory)

    members = [gs.members(g) for g in range(groups)]
    owner = gs.member_of
    s = [0] * gs.N
    system = TokenSystem(SystemConfig.symmetric(gs.N, d=2, rule=Rule.MIN_TOKEN, seed=seed))
    zero_returns: List[int] = []
    last_zero = 0
    nonzero = 0
    checks = 0
    t = 0
    for requesters, available, ties in system.draw_chunks(T):
        for k, avail, u in zip(requesters, available, ties):
            j = choose_provider(s, avail, Rule.MIN_TOKEN, u)
            t += 1
            a, b = owner[k], owner[j]
            if a != b:
                for m in members[a]:
                    s[m] -= 1
                for m in members[b]:
                    s[m] += 1
                for g in (a, b):
                    checks += 1
                    level = s[members[g][0]]
                    if any(s[m] != level for m in members[g]):
                        raise InvariantViolation(f"t={t}: membres du groupe {g} inégaux")
                va, vb = values[a], values[b]
                nonzero += (va != 1) - (va != 0) + (vb != -1) - (vb != 0)
                values[a] = va - 1
                values[b] = vb + 1
                if sum(values) != 0:
                    raise InvariantViolation(f"t={t}: somme des groupes non nulle")
            if nonzero == 0:
                zero_returns.append(t - last_zero)
                last_zero = t
            if record_every and t % record_every == 0:
                trajectory.append((t, list(values)))

    logger.info(f"Système groupé : T={T}, {checks} contrôles d'égalité, {len(zero_returns)} retours à zéro")
    return GroupedRun(
        T=T,
        final_groups=np.array(values, dtype=np.int64),
        final_members=np.array(s, dtype=np.int64),
        zero_returns=zero_returns,
        checks=checks,
        trajectory=trajectory,
    )
