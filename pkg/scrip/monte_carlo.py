"""
Module Monte Carlo : longues chaînes, queues stationnaires, temps de retour à zéro
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .dynamics import DEFAULT_CHUNK, SystemConfig, TokenSystem, choose_provider
from .errors import InvariantViolation, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_T = 20_000_000
DEFAULT_BURN_IN = 500_000
DEFAULT_BATCHES = 20


@dataclass
class SimStats:
    """Statistiques d'une chaîne : histogrammes d'occupation et écarts entre retours à zéro"""

    config: SystemConfig
    T: int
    burn_in: int
    batch_histograms: List[List[Dict[int, int]]]
    batch_lengths: List[int]
    zero_returns: List[int]
    final_state: np.ndarray
    snapshots: Dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def window(self) -> int:
        return self.T - self.burn_in

    @property
    def histogram(self) -> List[Dict[int, int]]:
        """Histogramme par agent sur toute la fenêtre d'échantillonnage"""
        merged: List[Dict[int, int]] = [defaultdict(int) for _ in range(self.config.n)]
        for batch in self.batch_histograms:
            for agent, counts in enumerate(batch):
                for value, count in counts.items():
                    merged[agent][value] += count
        return [dict(h) for h in merged]


@dataclass
class TailEstimates:
    """Estimations de p_{n,M}, q_{n,M}, r_{n,M} (moyenne sur agents et par agent)"""

    M_values: List[int]
    p_nM: Dict[int, float]
    q_nM: Dict[int, float]
    r_nM: Dict[int, float]
    stderr_p: Dict[int, float]
    per_agent: Dict[str, np.ndarray]
    per_agent_stderr: np.ndarray
    batch_p: np.ndarray

    def tail(self, M: int) -> float:
        """P(|s_1| > M)"""
        return 1.0 - self.p_nM[M]


def _batch_bounds(burn_in: int, T: int, batches: int) -> List[int]:
    window = T - burn_in
    start = burn_in + 1
    return [start + (b * window) // batches for b in range(1, batches)] + [T + 1]


def run_chain(config: SystemConfig, T: int, burn_in: int, batches: int = DEFAULT_BATCHES,
              snapshot_times: Sequence[int] = (), chunk: int = DEFAULT_CHUNK) -> SimStats:
    """
    Fait tourner une chaîne et collecte les statistiques stationnaires

    Les histogrammes couvrent les instants (burn_in, T] ; les écarts entre visites
    de l'état nul couvrent toute la trajectoire (t=0 compte comme visite).

    Args:
        config: Configuration du système
        T: Nombre total de périodes
        burn_in: Préfixe ignoré pour les histogrammes
        batches: Nombre de lots pour les erreurs-types
        snapshot_times: Instants où l'état complet est enregistré
        chunk: Taille des blocs de tirages

    Returns:
        SimStats
    """
    if not 0 <= burn_in < T:
        raise ValidationError(f"il faut 0 ≤ burn_in < T (burn_in={burn_in}, T={T})")
    n = config.n
    rule = config.rule
    window = T - burn_in
    batches = max(1, min(batches, window))
    bounds = _batch_bounds(burn_in, T, batches)
    histograms = [[defaultdict(int) for _ in range(n)] for _ in range(batches)]

    s = [0] * n
    since = [burn_in + 1] * n
    nonzero = 0
    last_zero = 0
    gaps: List[int] = []
    snaps = sorted(set(int(x) for x in snapshot_times if 0 < x <= T))
    snapshots: Dict[int, np.ndarray] = {}
    next_snap = snaps.pop(0) if snaps else -1

    window_start = burn_in + 1
    active = False
    batch = 0
    next_bound = bounds[0]
    current = histograms[0]
    t = 0

    system = TokenSystem(config)
    for requesters, available, ties in system.draw_chunks(T, chunk):
        for k, avail, u in zip(requesters, available, ties):
            j = choose_provider(s, avail, rule, u)
            t += 1
            if active:
                if t == next_bound:
                    for i in range(n):
                        current[i][s[i]] += t - since[i]
                        since[i] = t
                    batch += 1
                    current = histograms[batch]
                    next_bound = bounds[batch]
            elif t == window_start:
                active = True
                since = [t] * n
            if k != j:
                a = s[k]
                b = s[j]
                if active:
                    current[k][a] += t - since[k]
                    since[k] = t
                    current[j][b] += t - since[j]
                    since[j] = t
                nonzero += (a != 1) - (a != 0) + (b != -1) - (b != 0)
                s[k] = a - 1
                s[j] = b + 1
            if nonzero == 0:
                gaps.append(t - last_zero)
                last_zero = t
            if t == next_snap:
                snapshots[t] = np.array(s, dtype=np.int64)
                next_snap = snaps.pop(0) if snaps else -1

    for i in range(n):
        current[i][s[i]] += T + 1 - since[i]

    if sum(s) != 0:
        raise InvariantViolation(f"somme des jetons non nulle en fin de chaîne: {sum(s)}")
    lengths = [b - a for a, b in zip([window_start] + bounds[:-1], bounds)]
    logger.debug(f"Chaîne terminée: n={n}, T={T}, {len(gaps)} retours à zéro")
    return SimStats(
        config=config,
        T=T,
        burn_in=burn_in,
        batch_histograms=[[{v: c for v, c in h.items() if c} for h in batch_h] for batch_h in histograms],
        batch_lengths=lengths,
        zero_returns=gaps,
        final_state=np.array(s, dtype=np.int64),
        snapshots=snapshots,
    )


def _masses(counts: Dict[int, int], M_values: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if not counts:
        zeros = np.zeros(len(M_values))
        return zeros, zeros, zeros
    values = np.fromiter(counts.keys(), dtype=np.int64)
    weights = np.fromiter(counts.values(), dtype=np.float64)
    M = M_values[None, :]
    inside = ((np.abs(values)[:, None] <= M) * weights[:, None]).sum(axis=0)
    below = ((values[:, None] <= M) * weights[:, None]).sum(axis=0)
    above = ((values[:, None] >= -M) * weights[:, None]).sum(axis=0)
    return inside, below, above


def _batch_stderr(series: np.ndarray) -> np.ndarray:
    """Erreur-type par moyennes de lots (axe 0 = lots)"""
    count = series.shape[0]
    if count < 2:
        return np.zeros(series.shape[1:])
    return series.std(axis=0, ddof=1) / np.sqrt(count)


def tails(stats: SimStats, M_max: int) -> TailEstimates:
    """
    Estime P(|s_i| ≤ M), P(s_i ≤ M), P(s_i ≥ -M) pour M = 0..M_max

    Args:
        stats: Statistiques d'une chaîne
        M_max: Plus grand M estimé

    Returns:
        TailEstimates (moyennes sur agents, valeurs par agent, erreurs-types par lots)
    """
    if stats.window <= 0:
        raise ValidationError("statistiques vides")
    n = stats.config.n
    M_values = np.arange(0, M_max + 1)
    batches = len(stats.batch_histograms)
    batch_p = np.zeros((batches, n, len(M_values)))
    inside = np.zeros((n, len(M_values)))
    below = np.zeros((n, len(M_values)))
    above = np.zeros((n, len(M_values)))
    for b, (batch, length) in enumerate(zip(stats.batch_histograms, stats.batch_lengths)):
        for agent, counts in enumerate(batch):
            i_mass, b_mass, a_mass = _masses(counts, M_values)
            batch_p[b, agent] = i_mass / length
            inside[agent] += i_mass
            below[agent] += b_mass
            above[agent] += a_mass

    window = float(stats.window)
    p_agent = inside / window
    q_agent = below / window
    r_agent = above / window
    stderr = _batch_stderr(batch_p.mean(axis=1))
    return TailEstimates(
        M_values=M_values.tolist(),
        p_nM={int(M): float(v) for M, v in zip(M_values, p_agent.mean(axis=0))},
        q_nM={int(M): float(v) for M, v in zip(M_values, q_agent.mean(axis=0))},
        r_nM={int(M): float(v) for M, v in zip(M_values, r_agent.mean(axis=0))},
        stderr_p={int(M): float(v) for M, v in zip(M_values, stderr)},
        per_agent={'p': p_agent, 'q': q_agent, 'r': r_agent},
        per_agent_stderr=_batch_stderr(batch_p),
        batch_p=batch_p,
    )


def group_tails(estimates: TailEstimates, members: Sequence[int]) -> Tuple[Dict[int, float], Dict[int, float]]:
    """
    Moyenne des P(|s_i| ≤ M) sur un sous-ensemble d'agents (ex. les agents de type A)

    Returns:
        (valeurs par M, erreurs-types par M)
    """
    idx = list(members)
    if not idx:
        raise ValidationError("group_tails: groupe vide")
    values = estimates.per_agent['p'][idx].mean(axis=0)
    stderr = _batch_stderr(estimates.batch_p[:, idx, :].mean(axis=1))
    return (
        {M: float(v) for M, v in zip(estimates.M_values, values)},
        {M: float(v) for M, v in zip(estimates.M_values, stderr)},
    )


def zero_return_summary(stats: SimStats, batches: int = DEFAULT_BATCHES) -> Dict[str, float]:
    """Moyenne et erreur-type des écarts entre visites de l'état nul"""
    gaps = np.asarray(stats.zero_returns, dtype=np.float64)
    if gaps.size == 0:
        return {'count': 0, 'mean': float('nan'), 'stderr': float('nan'), 'half_mean': float('nan'), 'drift': float('nan')}
    usable = (gaps.size // batches) * batches
    stderr = float('nan')
    if usable >= 2 * batches:
        stderr = float(_batch_stderr(gaps[:usable].reshape(batches, -1).mean(axis=1)[:, None])[0])
    half = gaps[: max(1, gaps.size // 2)]
    mean = float(gaps.mean())
    return {
        'count': int(gaps.size),
        'mean': mean,
        'stderr': stderr,
        'half_mean': float(half.mean()),
        'drift': abs(float(half.mean()) - mean) / mean,
    }


def _map(func: Callable, tasks: List, workers: int) -> List:
    if workers <= 1 or len(tasks) <= 1:
        return [func(task) for task in tasks]
    with Pool(processes=workers) as pool:
        return pool.map(func, tasks)


def _sweep_task(task: Tuple[int, int, int, int, int, int]) -> Tuple[int, int, TailEstimates]:
    n, seed, d, T, burn_in, M_max = task
    config = SystemConfig.symmetric(n, d=d, seed=seed)
    estimates = tails(run_chain(config, T, burn_in), M_max)
    logger.info(f"Balayage: n={n}, graine={seed}, p_(n,1)={estimates.p_nM.get(1, float('nan')):.4f}")
    return n, seed, estimates


@dataclass
class SweepTable:
    """Tableau (n, d, M, seed, p, q, r, stderr_p) prêt pour le CSV"""

    rows: List[Dict[str, float]]
    monotonicity: List[Dict[str, float]]

    HEADER = ['n', 'd', 'M', 'seed', 'p', 'q', 'r', 'stderr_p']


def sweep_n(n_values: Iterable[int], M_max: int, d: int, T: int, burn_in: int,
            seeds: Sequence[int], workers: int = 1) -> SweepTable:
    """
    Balaye n pour les courbes p_{n,M} ; la monotonie en n est rapportée, jamais imposée

    Args:
        n_values: Valeurs de n (toutes ≥ 2)
        M_max: Plus grand M
        d: Densité de disponibilité
        T: Périodes par chaîne
        burn_in: Préfixe ignoré
        seeds: Graines (une chaîne par couple (n, graine))
        workers: Nombre de processus

    Returns:
        SweepTable
    """
    n_values = sorted(set(int(n) for n in n_values))
    if any(n < 2 for n in n_values):
        raise ValidationError(f"toutes les valeurs de n doivent être ≥ 2: {n_values}")
    tasks = [(n, int(seed), d, T, burn_in, M_max) for n in n_values for seed in seeds]
    results = sorted(_map(_sweep_task, tasks, workers), key=lambda r: (r[0], r[1]))

    rows = []
    for n, seed, est in results:
        for M in est.M_values:
            rows.append({
                'n': n, 'd': d, 'M': M, 'seed': seed,
                'p': est.p_nM[M], 'q': est.q_nM[M], 'r': est.r_nM[M], 'stderr_p': est.stderr_p[M],
            })

    monotonicity = []
    by_n: Dict[int, Dict[int, Tuple[float, float]]] = {}
    for n in n_values:
        per_seed = [est for m, _, est in results if m == n]
        by_n[n] = {
            M: (float(np.mean([e.p_nM[M] for e in per_seed])),
                float(np.sqrt(np.sum([e.stderr_p[M] ** 2 for e in per_seed])) / len(per_seed)))
            for M in per_seed[0].M_values
        }
    for prev, nxt in zip(n_values, n_values[1:]):
        for M in by_n[prev]:
            (p_prev, se_prev), (p_next, se_next) = by_n[prev][M], by_n[nxt][M]
            tolerance = 2.0 * float(np.hypot(se_prev, se_next))
            monotonicity.append({
                'n': prev, 'n_next': nxt, 'M': M, 'diff': p_next - p_prev,
                'non_increasing': p_next <= p_prev + tolerance,
            })
    breaks = sum(1 for m in monotonicity if not m['non_increasing'])
    logger.info(f"Balayage terminé: {len(rows)} lignes, {breaks} écart(s) à la monotonie observé(s)")
    return SweepTable(rows=rows, monotonicity=monotonicity)


@dataclass
class BoundReport:
    """Vérification empirique de P(|s_1| > M) ≤ 5/M"""

    passed: bool
    worst_margin: float
    worst_M: int
    violations: List[int]
    margins: Dict[int, float]


def check_5_over_M(estimates: TailEstimates, M_max: Optional[int] = None) -> BoundReport:
    """
    Compare la queue empirique à la borne 5/M (avec 3 erreurs-types de marge)

    Une violation signalerait un bug, la borne étant démontrée pour d ≥ 2.
    """
    M_top = max(estimates.M_values) if M_max is None else int(M_max)
    if not 1 <= M_top <= max(estimates.M_values):
        raise ValidationError(f"M_max doit être dans [1, {max(estimates.M_values)}] (reçu {M_top})")
    margins = {}
    for M in range(1, M_top + 1):
        margins[M] = 5.0 / M + 3.0 * estimates.stderr_p[M] - estimates.tail(M)
    worst_M = min(margins, key=margins.get)
    violations = [M for M, margin in margins.items() if margin < 0]
    if violations:
        logger.warning(f"Borne 5/M violée pour M={violations} : comportement anormal de la chaîne")
    return BoundReport(
        passed=not violations,
        worst_margin=margins[worst_M],
        worst_M=worst_M,
        violations=violations,
        margins=margins,
    )


def _variance_task(task: Tuple[SystemConfig, int, int, int]) -> Tuple[int, int]:
    config, t1, t2, agent = task
    system = TokenSystem(config)
    first = int(system.run(t1).s[agent])
    second = int(system.run(t2 - t1).s[agent])
    return first, second


def variance_growth(config: SystemConfig, t1: int, t2: int, seeds: Sequence[int],
                    agent: int = 0, workers: int = 1) -> Dict[str, float]:
    """
    Rapport Var(s_agent à t2) / Var(s_agent à t1) sur plusieurs graines

    Pour d=1 la marche est paresseuse et sa variance croît linéairement en t.
    """
    if not 0 < t1 < t2:
        raise ValidationError(f"il faut 0 < t1 < t2 (t1={t1}, t2={t2})")
    tasks = [(config.with_seed(int(seed)), t1, t2, agent) for seed in seeds]
    samples = np.array(_map(_variance_task, tasks, workers), dtype=np.float64)
    var1 = float(samples[:, 0].var(ddof=1))
    var2 = float(samples[:, 1].var(ddof=1))
    return {'t1': t1, 't2': t2, 'var_t1': var1, 'var_t2': var2, 'ratio': var2 / var1 if var1 > 0 else float('inf')}


def two_type_tails(n: int, f: int, alpha: float, beta_ratio: float, T: int, burn_in: int,
                   seed: int, M_max: int = 4) -> Dict[str, Dict[int, float]]:
    """
    Queues par type pour le système à deux types (f agents A, n-f agents B)

    Returns:
        {'A': {M: p}, 'B': {M: p}, 'stderr_A': ..., 'stderr_B': ...}
    """
    config = SystemConfig.two_type(n, f, alpha, beta_ratio, seed=seed)
    estimates = tails(run_chain(config, T, burn_in), M_max)
    p_a, se_a = group_tails(estimates, range(f))
    p_b, se_b = group_tails(estimates, range(f, n))
    return {'A': p_a, 'B': p_b, 'stderr_A': se_a, 'stderr_B': se_b}


def _two_type_task(task: Tuple[int, int, float, float, int, int, int, int]) -> Dict:
    n, f, alpha, beta_ratio, T, burn_in, seed, M_max = task
    result = two_type_tails(n, f, alpha, beta_ratio, T, burn_in, seed, M_max)
    result['f'] = f
    return result


def two_type_sweep(n: int, f_values: Iterable[int], alpha: float, beta_ratio: float, T: int,
                   burn_in: int, seed: int, M_max: int = 4, workers: int = 1) -> List[Dict[str, float]]:
    """
    Statique comparative des tables à deux types : une chaîne par valeur de f

    Returns:
        Lignes CSV f,type,M,p,stderr
    """
    tasks = [(n, int(f), alpha, beta_ratio, T, burn_in, seed, M_max) for f in f_values]
    rows = []
    for result in _map(_two_type_task, tasks, workers):
        for kind in ('A', 'B'):
            for M in range(1, M_max + 1):
                rows.append({
                    'f': result['f'], 'type': kind, 'M': M,
                    'p': result[kind][M], 'stderr': result[f'stderr_{kind}'][M],
                })
    return rows
