"""
Module scrip - Exporte les composants du simulateur de système à jetons
"""

from .errors import (
    ConvergenceError,
    InfeasibleError,
    InvariantViolation,
    ScripError,
    UnstableSystemError,
    ValidationError,
)
from .dynamics import Rule, SystemConfig, TokenState, TokenSystem, step
from .group_reduction import GroupedSystem, reduce, simulate_grouped
from .kidney import PairPopulation, PopulationConfig, compare_rules, generate_population, run_horizon

__version__ = '1.0.0'

__all__ = [
    'ConvergenceError', 'InfeasibleError', 'InvariantViolation', 'ScripError',
    'UnstableSystemError', 'ValidationError',
    'Rule', 'SystemConfig', 'TokenState', 'TokenSystem', 'step',
    'GroupedSystem', 'reduce', 'simulate_grouped',
    'PairPopulation', 'PopulationConfig', 'compare_rules', 'generate_population', 'run_horizon',
    '__version__',
]
