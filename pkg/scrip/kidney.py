"""
Module de simulation d'un pool d'échange de reins entre hôpitaux
Arrivées, échanges à deux paires, sélection de l'hôpital fournisseur,
départs et registre de jetons par hôpital
"""

import hashlib
import heapq
import logging
import struct
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dynamics import Rule
from .errors import InvariantViolation, ValidationError

logger = logging.getLogger(__name__)

ABO_TYPES = ('O', 'A', 'B', 'AB')

# groupe du donneur -> groupes de patients compatibles
ABO_COMPATIBLE = {
    'O': {'O', 'A', 'B', 'AB'},
    'A': {'A', 'AB'},
    'B': {'B', 'AB'},
    'AB': {'AB'},
}

US_ABO_FREQ = {'O': 0.45, 'A': 0.40, 'B': 0.11, 'AB': 0.04}
DEFAULT_PRA_MIXTURE = [
    [0.60, [0.0, 0.2]],
    [0.25, [0.2, 0.9]],
    [0.15, [0.9, 1.0]],
]
DEPARTURE_RATE = 1.0 / 365.0
MAX_RESAMPLES = 1000

EVENT_HEADER = ['day', 'event', 'pair', 'hospital', 'counterparty', 'tokens_after']
TRAJECTORY_HEADER = ['day', 'hospital', 'tokens']


@dataclass
class PopulationConfig:
    """Paramètres de la population synthétique de paires patient-donneur"""

    n_pairs: int = 1881
    n_hospitals: int = 84
    size_sigma: float = 1.0
    max_hospital_size: int = 150
    patient_abo: Dict[str, float] = field(default_factory=lambda: dict(US_ABO_FREQ))
    donor_abo: Dict[str, float] = field(default_factory=lambda: dict(US_ABO_FREQ))
    pra_mixture: List[List[Any]] = field(default_factory=lambda: [list(c) for c in DEFAULT_PRA_MIXTURE])
    require_incompatible: bool = True

    def __post_init__(self):
        if self.n_pairs < 1 or self.n_hospitals < 1:
            raise ValidationError(f"n_pairs et n_hospitals doivent être ≥ 1 ({self.n_pairs}, {self.n_hospitals})")
        if self.n_pairs > self.n_hospitals * self.max_hospital_size:
            raise ValidationError(
                f"{self.n_pairs} paires ne tiennent pas dans {self.n_hospitals} hôpitaux de taille ≤ {self.max_hospital_size}"
            )
        for name in ('patient_abo', 'donor_abo'):
            freq = getattr(self, name)
            unknown = set(freq) - set(ABO_TYPES)
            if unknown or not freq or any(v < 0 for v in freq.values()) or sum(freq.values()) <= 0:
                raise ValidationError(f"{name} invalide: {freq}")
        weights = [float(w) for w, _ in self.pra_mixture]
        if not weights or any(w < 0 for w in weights) or sum(weights) <= 0:
            raise ValidationError(f"pra_mixture invalide: {self.pra_mixture}")
        for _, (low, high) in self.pra_mixture:
            if not 0.0 <= low <= high <= 1.0:
                raise ValidationError(f"intervalle de PRA invalide: [{low}, {high}]")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'PopulationConfig':
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"Clés inconnues dans la configuration de population: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> Dict[str, Any]:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


@dataclass(frozen=True)
class Pair:
    id: int
    hospital: int
    patient_abo: str
    donor_abo: str
    pra: float


@dataclass(frozen=True)
class Hospital:
    id: int
    pair_count: int


@dataclass
class PairPopulation:
    """Paires et hôpitaux (chaque paire référence un hôpital existant)"""

    pairs: List[Pair]
    hospitals: List[Hospital]
    self_incompatible: bool = False

    def __post_init__(self):
        ids = {h.id for h in self.hospitals}
        orphans = [p.id for p in self.pairs if p.hospital not in ids]
        if orphans:
            raise ValidationError(f"paires sans hôpital: {orphans[:10]}")

    @property
    def n_hospitals(self) -> int:
        return len(self.hospitals)


def _hospital_sizes(config: PopulationConfig, rng: np.random.Generator) -> List[int]:
    """Tailles log-normales, chaque hôpital recevant au moins une paire quand c'est possible"""
    weights = rng.lognormal(mean=0.0, sigma=config.size_sigma, size=config.n_hospitals)
    if config.n_pairs >= config.n_hospitals:
        sizes = 1 + rng.multinomial(config.n_pairs - config.n_hospitals, weights / weights.sum())
    else:
        sizes = rng.multinomial(config.n_pairs, weights / weights.sum())
    cap = config.max_hospital_size
    while (sizes > cap).any():
        excess = int(np.maximum(sizes - cap, 0).sum())
        sizes = np.minimum(sizes, cap)
        room = sizes < cap
        w = np.where(room, weights, 0.0)
        sizes = sizes + rng.multinomial(excess, w / w.sum())
    return [int(s) for s in sizes]


def _pick(freq: Dict[str, float], rng: np.random.Generator) -> str:
    keys = list(freq)
    probs = np.array([freq[k] for k in keys], dtype=np.float64)
    return keys[int(rng.choice(len(keys), p=probs / probs.sum()))]


def _sample_pra(mixture: List[List[Any]], rng: np.random.Generator) -> float:
    weights = np.array([float(w) for w, _ in mixture])
    low, high = mixture[int(rng.choice(len(mixture), p=weights / weights.sum()))][1]
    return float(rng.uniform(low, high)) if high > low else float(low)


def generate_population(config: Optional[PopulationConfig] = None, seed: int = 0) -> PairPopulation:
    """
    Génère une population synthétique reproductible

    Args:
        config: Paramètres de population (défaut : 1881 paires, 84 hôpitaux)
        seed: Graine

    Returns:
        PairPopulation ; les hôpitaux vides sont retirés et renumérotés
    """
    config = config or PopulationConfig()
    rng = np.random.Generator(np.random.PCG64(seed))
    sizes = _hospital_sizes(config, rng)
    kept = [size for size in sizes if size > 0]
    if len(kept) < len(sizes):
        logger.info(f"{len(sizes) - len(kept)} hôpital(aux) vide(s) retiré(s)")

    pairs: List[Pair] = []
    hospitals: List[Hospital] = []
    for hospital, size in enumerate(kept):
        hospitals.append(Hospital(hospital, size))
        for _ in range(size):
            for _ in range(MAX_RESAMPLES):
                patient = _pick(config.patient_abo, rng)
                donor = _pick(config.donor_abo, rng)
                pra = _sample_pra(config.pra_mixture, rng)
                self_match = patient in ABO_COMPATIBLE[donor] and rng.random() < 1.0 - pra
                if not (config.require_incompatible and self_match):
                    break
            else:
                raise ValidationError("impossible de tirer une paire incompatible avec ces paramètres")
            pairs.append(Pair(len(pairs), hospital, patient, donor, pra))
    logger.info(f"Population générée: {len(pairs)} paires, {len(hospitals)} hôpitaux")
    return PairPopulation(pairs, hospitals, self_incompatible=config.require_incompatible)


class CompatModel:
    """
    Compatibilité ABO et crossmatch

    L'uniforme du crossmatch d'un couple ordonné (donneur, patient) est un hachage
    de la graine et des deux identifiants : le graphe de compatibilité est fixé
    par la graine, quelle que soit la règle simulée.
    """

    def __init__(self, population: PairPopulation, seed: int):
        self.population = population
        self.seed = int(seed)
        self._cache: Dict[Tuple[int, int], bool] = {}

    def crossmatch_uniform(self, donor_pair: int, patient_pair: int) -> float:
        digest = hashlib.sha256(f"{self.seed}:{donor_pair}:{patient_pair}".encode()).digest()
        return struct.unpack_from('<Q', digest, 0)[0] / 2.0 ** 64

    def compatible(self, donor_pair: int, patient_pair: int) -> bool:
        """Le donneur de donor_pair peut-il donner au patient de patient_pair ?"""
        key = (donor_pair, patient_pair)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        if donor_pair == patient_pair and self.population.self_incompatible:
            # paire tirée incompatible à la génération
            self._cache[key] = False
            return False
        donor =self.population.pairs[donor_pair]
        patient = self.population.pairs[patient_pair]
        result = (
            patient.patient_abo in ABO_COMPATIBLE[donor.donor_abo]
            and self.crossmatch_uniform(donor_pair, patient_pair) < 1.0 - patient.pra
        )
        self._cache[key] = result
        return result

    def mutual(self, a: int, b: int) -> bool:
        return self.compatible(a, b) and self.compatible(b, a)


@dataclass
class ExchangePool:
    """Paires en attente (instance -> paire de la population), registre de jetons, jour courant"""

    ledger: np.ndarray
    waiting: Dict[int, int] = field(default_factory=dict)
    clock: int = 0
    next_arrival: int = 0
    departures: List[Tuple[int, int]] = field(default_factory=list)

    @classmethod
    def empty(cls, n_hospitals: int) -> 'ExchangePool':
        return cls(ledger=np.zeros(n_hospitals, dtype=np.int64))

    def audit(self):
        total = int(self.ledger.sum())
        if total != 0:
            raise InvariantViolation(f"jour {self.clock}: somme des jetons non nulle ({total})")


@dataclass
class RunStreams:
    """Flux aléatoires séparés : arrivées, départs, départages ; clé de crossmatch"""

    arrivals: np.random.Generator
    departures: np.random.Generator
    ties: np.random.Generator
    crossmatch_key: int

    @classmethod
    def from_seed(cls, seed: int) -> 'RunStreams':
        arrivals, crossmatch, departures, ties = np.random.SeedSequence(seed).spawn(4)
        return cls(
            arrivals=np.random.Generator(np.random.PCG64(arrivals)),
            departures=np.random.Generator(np.random.PCG64(departures)),
            ties=np.random.Generator(np.random.PCG64(ties)),
            crossmatch_key=int(crossmatch.generate_state(1, np.uint64)[0]),
        )


@dataclass
class DayOutcome:
    pair: int
    candidates: int
    matched_with: Optional[int] = None
    departed: List[int] = field(default_factory=list)


def select_partner(candidates: Sequence[Tuple[int, int]], ledger: np.ndarray, population: PairPopulation,
                   rule: Rule, u_hospital: float, u_pair: float) -> int:
    """
    Choisit l'instance partenaire parmi les candidats (instance, paire)

    MIN_TOKEN : hôpital au registre minimal (uniforme parmi les hôpitaux distincts
    à égalité), puis paire uniforme dans cet hôpital. UNIFORM : candidat uniforme.
    """
    if rule is Rule.UNIFORM:
        return candidates[min(int(u_hospital * len(candidates)), len(candidates) - 1)][0]
    hospitals = sorted({population.pairs[pair].hospital for _, pair in candidates})
    best = min(ledger[h] for h in hospitals)
    tied = [h for h in hospitals if ledger[h] == best]
    chosen = tied[min(int(u_hospital * len(tied)), len(tied) - 1)]
    local = [inst for inst, pair in candidates if population.pairs[pair].hospital == chosen]
    return local[min(int(u_pair * len(local)), len(local) - 1)]


def run_day(pool: ExchangePool, population: PairPopulation, rule: Rule, streams: RunStreams,
            compat: CompatModel, events: Optional[List[Dict[str, Any]]] = None) -> DayOutcome:
    """
    Une journée : arrivée, échange éventuel avec paiement d'un jeton, départs

    Chaque arrivée tire sa durée de vie géométrique (taux 1/365) et chaque jour avec
    candidats consomme deux uniformes de départage, quelle que soit la règle.
    """
    rule = Rule.parse(rule)
    day = pool.clock
    pair = int(streams.arrivals.integers(len(population.pairs)))
    lifetime = int(streams.departures.geometric(DEPARTURE_RATE))
    instance = pool.next_arrival
    pool.next_arrival += 1
    hospital = population.pairs[pair].hospital
    if events is not None:
        events.append({'day': day, 'event': 'arrival', 'pair': pair, 'hospital': hospital,
                       'counterparty': '', 'tokens_after': int(pool.ledger[hospital])})

    candidates = [(inst, other) for inst, other in pool.waiting.items() if compat.mutual(pair, other)]
    outcome = DayOutcome(pair=pair, candidates=len(candidates))
    if candidates:
        u_hospital, u_pair = streams.ties.random(2)
        partner = select_partner(candidates, pool.ledger, population, rule, u_hospital, u_pair)
        provider = population.pairs[pool.waiting.pop(partner)].hospital
        pool.ledger[hospital] -= 1
        pool.ledger[provider] += 1
        outcome.matched_with = partner
        if events is not None:
            events.append({'day': day, 'event': 'match', 'pair': pair, 'hospital': hospital,
                           'counterparty': provider, 'tokens_after': int(pool.ledger[hospital])})
    else:
        pool.waiting[instance] = pair
        heapq.heappush(pool.departures, (day + lifetime - 1, instance))
        if events is not None:
            events.append({'day': day, 'event': 'enter', 'pair': pair, 'hospital': hospital,
                           'counterparty': '', 'tokens_after': int(pool.ledger[hospital])})

    while pool.departures and pool.departures[0][0] <= day:
        _, inst = heapq.heappop(pool.departures)
        gone = pool.waiting.pop(inst, None)
        if gone is None:
            continue
        outcome.departed.append(inst)
        if events is not None:
            h = population.pairs[gone].hospital
            events.append({'day': day, 'event': 'depart', 'pair': gone, 'hospital': h,
                           'counterparty': '', 'tokens_after': int(pool.ledger[h])})

    pool.audit()
    pool.clock += 1
    return outcome


@dataclass
class HorizonResult:
    """Trajectoires de registres et diagnostics d'un run"""

    rule: Rule
    T_days: int
    seed: int
    ledger: np.ndarray
    trajectory: List[Tuple[int, np.ndarray]]
    pool_sizes: List[Tuple[int, int]]
    diagnostics: Dict[str, float]
    events: List[Dict[str, Any]]

    @property
    def max_abs_tokens(self) -> int:
        return int(np.abs(self.ledger).max()) if self.ledger.size else 0

    def trajectory_rows(self) -> List[Dict[str, int]]:
        return [
            {'day': day, 'hospital': h, 'tokens': int(tokens)}
            for day, ledger in self.trajectory
            for h, tokens in enumerate(ledger)
        ]


def run_horizon(population: PairPopulation, rule: Rule, T_days: int, seed: int = 0,
                record_every: int = 100, keep_events: bool = False) -> HorizonResult:
    """
    Simule T_days journées depuis un pool vide

    Args:
        population: Population de paires
        rule: Règle de sélection de l'hôpital fournisseur
        T_days: Nombre de jours (≥ 1)
        seed: Graine des flux aléatoires
        record_every: Période d'échantillonnage des registres et de la taille du pool
        keep_events: Conserve le journal d'événements

    Returns:
        HorizonResult
    """
    if T_days < 1:
        raise ValidationError(f"T_days doit être ≥ 1 (reçu {T_days})")
    rule = Rule.parse(rule)
    streams = RunStreams.from_seed(seed)
    compat = CompatModel(population, streams.crossmatch_key)
    pool = ExchangePool.empty(population.n_hospitals)
    events: Optional[List[Dict[str, Any]]] = [] if keep_events else None

    trajectory: List[Tuple[int, np.ndarray]] = []
    pool_sizes: List[Tuple[int, int]] = []
    matched = multi = candidate_total = 0
    max_seen = 0
    for _ in range(T_days):
        outcome = run_day(pool, population, rule, streams, compat, events)
        if outcome.matched_with is not None:
            matched += 1
            candidate_total += outcome.candidates
            multi += outcome.candidates >= 2
        max_seen = max(max_seen, int(np.abs(pool.ledger).max()))
        if record_every and pool.clock % record_every == 0:
            trajectory.append((pool.clock, pool.ledger.copy()))
            pool_sizes.append((pool.clock, len(pool.waiting)))

    diagnostics = {
        'matched_arrivals': matched,
        'match_rate': matched / T_days,
        'multi_candidate_share': multi / matched if matched else float('nan'),
        'mean_candidates': candidate_total / matched if matched else float('nan'),
        'final_pool_size': len(pool.waiting),
        'max_abs_tokens': int(np.abs(pool.ledger).max()),
        'max_abs_tokens_seen': max_seen,
    }
    logger.info(
        f"Pool rein ({rule.value}, graine={seed}): {matched}/{T_days} arrivées appariées, "
        f"max|jetons|={diagnostics['max_abs_tokens']}, part ≥2 candidats={diagnostics['multi_candidate_share']:.3f}"
    )
    return HorizonResult(rule, T_days, seed, pool.ledger.copy(), trajectory, pool_sizes, diagnostics, events or [])


def compare_rules(population: PairPopulation, T_days: int, seeds: Sequence[int],
                  record_every: int = 0) -> Dict[str, Any]:
    """
    Contraste apparié : mêmes flux d'arrivées, de départs et de crossmatch pour les deux règles

    Returns:
        {'runs': [...], 'min_token_smaller_share': float}
    """
    runs = []
    for seed in seeds:
        min_token = run_horizon(population, Rule.MIN_TOKEN, T_days, int(seed), record_every)
        uniform = run_horizon(population, Rule.UNIFORM, T_days, int(seed), record_every)
        runs.append({
            'seed': int(seed),
            'min_token_max_abs': min_token.max_abs_tokens,
            'uniform_max_abs': uniform.max_abs_tokens,
            'min_token_smaller': min_token.max_abs_tokens < uniform.max_abs_tokens,
        })
    share = sum(r['min_token_smaller'] for r in runs) / len(runs) if runs else float('nan')
    logger.info(f"Comparaison des règles: min-jeton plus serré dans {share:.0%} des {len(runs)} runs")
    return {'runs': runs, 'min_token_smaller_share': share}
