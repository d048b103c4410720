"""
Suite de recette : chaque critère exécute une analyse et compare les valeurs
mesurées aux valeurs de référence
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from . import exact_oracle, group_reduction, kidney, mean_field, monte_carlo, two_agent, two_type
from .dynamics import Rule, SystemConfig, spawn_seeds
from .errors import ScripError

logger = logging.getLogger(__name__)

ASYMMETRIC_CONFIGS = [
    ((0.55, 0.45), (0.45, 0.55)),
    ((0.6, 0.4), (0.5, 0.5)),
    ((0.4, 0.6), (0.55, 0.45)),
    ((0.7, 0.3), (0.6, 0.4)),
    ((0.3, 0.7), (0.35, 0.65)),
]
LARGE_N_TARGETS = {1: 0.6184, 2: 0.8645, 3: 0.9500, 4: 0.9759}
TWO_TYPE_TARGETS = {
    'A': {1: 0.6476, 2: 0.8753, 3: 0.9510, 4: 0.9767},
    'B': {1: 0.6410, 2: 0.8645, 3: 0.9512, 4: 0.9809},
}


@dataclass
class CriterionResult:
    criterion: int
    name: str
    passed: bool
    measured: Dict[str, Any] = field(default_factory=dict)
    elapsed_s: float = 0.0
    error: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'criterion': self.criterion,
            'name': self.name,
            'passed': self.passed,
            'measured': self.measured,
            'elapsed_s': round(self.elapsed_s, 3),
            'error': self.error,
        }


@dataclass
class Profile:
    """Horizons de la suite (profil complet ou rapide)"""

    quick: bool
    seed: int = 0
    workers: int = 1

    @property
    def T(self) -> int:
        return 2_000_000

    @property
    def burn_in(self) -> int:
        return 200_000

    @property
    def T_large(self) -> int:
        return 2_000_000 if self.quick else 20_000_000

    @property
    def burn_in_large(self) -> int:
        return 200_000 if self.quick else 500_000

    @property
    def large_tolerance(self) -> float:
        return 0.03 if self.quick else 0.02

    @property
    def bound_T(self) -> int:
        return 200_000 if self.quick else 2_000_000

    @property
    def variance_times(self):
        return (20_000, 40_000) if self.quick else (100_000, 200_000)

    @property
    def kidney_days(self) -> int:
        return 20_000 if self.quick else 100_000

    @property
    def kidney_seeds(self) -> int:
        return 5 if self.quick else 20


def closed_form_vs_oracle(profile: Profile) -> CriterionResult:
    worst = 0.0
    for p, q in ASYMMETRIC_CONFIGS:
        solution = two_agent.solve(p, q, d=2)
        chain = exact_oracle.build_chain(SystemConfig(n=2, p=p, q=q, d=2), B=60)
        exact_oracle.stationary(chain)
        for M in range(0, 11):
            worst = max(worst, abs(exact_oracle.tail_abs(chain, 0, M) - solution.tail(M)))
    return CriterionResult(1, 'forme fermée n=2 vs oracle exact', worst < 1e-8, {'max_abs_error': worst})


def symmetric_two_agents(profile: Profile) -> CriterionResult:
    config = SystemConfig.symmetric(2, d=2, seed=profile.seed)
    stats = monte_carlo.run_chain(config, profile.T, profile.burn_in)
    estimates = monte_carlo.tails(stats, 4)
    errors = {M: abs(estimates.tail(M) - (2.0 / 3.0) * (1.0 / 3.0) ** M) for M in range(0, 5)}
    returns = monte_carlo.zero_return_summary(stats)
    passed = max(errors.values()) <= 0.005 and abs(returns['mean'] - 3.0) <= 0.05
    return CriterionResult(2, 'Monte Carlo symétrique n=2', passed,
                           {'tail_errors': errors, 'mean_zero_return': returns['mean']})


def equilibrium(profile: Profile) -> CriterionResult:
    eq = mean_field.solve_equilibrium(2)
    pi_minus_4 = eq.pi(-4)
    passed = 0.66 <= eq.pi0 <= 0.68 and abs(eq.residual) < 1e-12 and 0.970 <= pi_minus_4 <= 0.980
    return CriterionResult(3, 'équilibre champ moyen', passed,
                           {'pi0': eq.pi0, 'residual': eq.residual, 'pi_minus_4': pi_minus_4})


def half_bound(profile: Profile) -> CriterionResult:
    report = mean_field.verify_half_bound(mean_field.solve_equilibrium(2), M_max=40)
    return CriterionResult(4, 'borne (1/2)^M', report.passed, {'min_g': report.minimum})


def fifty_agents(profile: Profile) -> CriterionResult:
    config = SystemConfig.symmetric(50, d=2, seed=profile.seed)
    estimates = monte_carlo.tails(monte_carlo.run_chain(config, profile.T_large, profile.burn_in_large), 4)
    errors = {M: abs(estimates.p_nM[M] - target) for M, target in LARGE_N_TARGETS.items()}
    return CriterionResult(5, 'p_{50,M} symétrique', max(errors.values()) <= profile.large_tolerance,
                           {'p': {M: estimates.p_nM[M] for M in LARGE_N_TARGETS}, 'errors': errors,
                            'tolerance': profile.large_tolerance})


def five_over_M(profile: Profile) -> CriterionResult:
    worst = {}
    passed = True
    for n in (2, 3, 5, 10):
        for d in (2, 3):
            config = SystemConfig.symmetric(n, d=d, seed=profile.seed)
            stats = monte_carlo.run_chain(config, profile.bound_T, profile.bound_T // 10)
            report = monte_carlo.check_5_over_M(monte_carlo.tails(stats, 30))
            worst[f'n={n},d={d}'] = report.worst_margin
            passed &= report.passed
    return CriterionResult(6, 'borne 5/M', passed, {'worst_margins': worst})


def d_one_instability(profile: Profile) -> CriterionResult:
    t1, t2 = profile.variance_times
    config = SystemConfig.symmetric(2, d=1)
    growth = monte_carlo.variance_growth(config, t1, t2, spawn_seeds(profile.seed, 50), workers=profile.workers)
    return CriterionResult(7, 'croissance de variance d=1', 1.6 <= growth['ratio'] <= 2.4, growth)


def mean_field_convergence(profile: Profile) -> CriterionResult:
    eq = mean_field.solve_equilibrium(2)
    trajectory = mean_field.integrate(mean_field.MeanFieldState.step_initial(), T=200.0, dt=0.01)
    distance = float(np.abs(trajectory.final().z - eq.window().z).sum())
    mass_error = float(np.abs(trajectory.masses).max())
    return CriterionResult(8, 'intégration champ moyen', distance < 1e-4 and mass_error < 1e-8,
                           {'l1_distance': distance, 'max_mass_error': mass_error})


def lipschitz(profile: Profile) -> CriterionResult:
    ratio = mean_field.lipschitz_spot_check(d=2, samples=10_000, seed=profile.seed)
    return CriterionResult(9, 'constante de Lipschitz', ratio <= 6.0, {'max_ratio': ratio, 'bound': 6})


def intermediate_availability(profile: Profile) -> CriterionResult:
    errors = {}
    for beta in (0.25, 0.5, 0.75):
        config = SystemConfig.symmetric(2, d=2, beta=beta, seed=profile.seed)
        estimates = monte_carlo.tails(monte_carlo.run_chain(config, profile.T, profile.burn_in), 6)
        solution = two_agent.solve_intermediate((0.5, 0.5), (0.5, 0.5), beta)
        errors[beta] = max(abs(estimates.p_nM[M] - solution.within(M)) for M in range(0, 7))
    return CriterionResult(10, 'disponibilité intermédiaire β', max(errors.values()) <= 0.01, {'max_errors': errors})


def grouped_reduction(profile: Profile) -> CriterionResult:
    gs = group_reduction.reduce(['1/2', '3/10', '1/5'])
    run = group_reduction.simulate_grouped(gs, 100_000, seed=profile.seed)
    passed = gs.sizes == [5, 3, 2] and gs.N == 10
    return CriterionResult(11, 'réduction par groupes', passed,
                           {'g': gs.sizes, 'N': gs.N, 'checks': run.checks})


def two_type_tables(profile: Profile) -> CriterionResult:
    """
    Tables à deux types : la chaîne (n=10, f=4, α=β=10) est comparée aux tables à ±0.03

    Avec α = β les deux types de l'EDO retrouvent le point fixe du modèle à un type ;
    l'EDO est donc comparée à solve_equilibrium(2), et son écart aux tables est rapporté.
    """
    simulated = monte_carlo.two_type_tails(10, 4, 10.0, 10.0, profile.T_large, profile.burn_in_large, profile.seed)
    ode = two_type.two_type_equilibrium_tails(10.0, 10.0)
    eq = mean_field.solve_equilibrium(2)
    mc_errors = {kind: max(abs(simulated[kind][M] - TWO_TYPE_TARGETS[kind][M]) for M in range(1, 5))
                 for kind in ('A', 'B')}
    ode_vs_single = max(abs(ode[kind][M] - eq.p_inf(M)) for kind in ('A', 'B') for M in range(1, 5))
    ode_vs_tables = {kind: max(abs(ode[kind][M] - TWO_TYPE_TARGETS[kind][M]) for M in range(1, 5))
                     for kind in ('A', 'B')}
    passed = max(mc_errors.values()) <= 0.03 and ode_vs_single <= 1e-3
    return CriterionResult(12, 'tables à deux types', passed,
                           {'mc': {k: simulated[k] for k in ('A', 'B')}, 'ode': ode, 'mc_errors': mc_errors,
                            'ode_vs_single_type': ode_vs_single, 'ode_vs_tables': ode_vs_tables})


def kidney_pool(profile: Profile) -> CriterionResult:
    population = kidney.generate_population(seed=profile.seed)
    result = kidney.run_horizon(population, Rule.MIN_TOKEN, profile.kidney_days, seed=profile.seed)
    comparison = kidney.compare_rules(population, profile.kidney_days, spawn_seeds(profile.seed, profile.kidney_seeds))
    passed = comparison['min_token_smaller_share'] >= 0.8
    return CriterionResult(13, 'pool d\'échange de reins', passed,
                           {'diagnostics': result.diagnostics, 'comparison': comparison})


CRITERIA: List[Callable[[Profile], CriterionResult]] = [
    closed_form_vs_oracle,
    symmetric_two_agents,
    equilibrium,
    half_bound,
    fifty_agents,
    five_over_M,
    d_one_instability,
    mean_field_convergence,
    lipschitz,
    intermediate_availability,
    grouped_reduction,
    two_type_tables,
    kidney_pool,
]


def run_acceptance(profile: Profile, only: Optional[List[int]] = None) -> List[CriterionResult]:
    """
    Exécute les critères (tous, ou ceux listés dans `only`)

    Une erreur du simulateur marque le critère en échec sans interrompre la suite.
    """
    results = []
    for number, criterion in enumerate(CRITERIA, start=1):
        if only and number not in only:
            continue
        started = time.perf_counter()
        try:
            result = criterion(profile)
        except ScripError as e:
            logger.error(f"Critère {number}: {e}")
            result = CriterionResult(number, criterion.__name__, False, error=str(e))
        result.elapsed_s = time.perf_counter() - started
        status = 'OK' if result.passed else 'ECHEC'
        logger.info(f"Critère {number} ({result.name}): {status} en {result.elapsed_s:.1f}s")
        results.append(result)
    return results
