"""
Programme principal du simulateur de système à jetons
Une sous-commande par analyse ; chaque sortie CSV/JSON est accompagnée d'un manifeste
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from scrip import __version__
from scrip import acceptance, exact_oracle, group_reduction, kidney, mean_field, monte_carlo, two_agent, two_type
from scrip.dynamics import Rule, SystemConfig, spawn_seeds, warn_if_unstable
from scrip.errors import (
    ConvergenceError,
    InvariantViolation,
    ScripError,
    UnstableSystemError,
    ValidationError,
)
from utils import ConfigLoader, DataLogger, RunManifest

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INTERNAL = 2


class UsageError(Exception):
    pass


class ScripArgumentParser(argparse.ArgumentParser):
    """argparse qui remonte les erreurs d'usage au lieu de quitter avec le code 2"""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: erreur: {message}")


def setup_logging(level: str, log_file: str):
    """Configuration du logging (fichier + console), sans effet sur des handlers déjà installés"""
    numeric = getattr(logging, str(level).upper(), logging.INFO)
    root = logging.getLogger()
    if not root.handlers:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        logging.basicConfig(
            level=numeric,
            format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
            handlers=[
                logging.FileHandler(log_file),
                logging.StreamHandler()
            ]
        )
    root.setLevel(numeric)


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"liste de nombres attendue: {text!r}")


def _ints(text: str) -> List[int]:
    try:
        return [int(float(v)) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"liste d'entiers attendue: {text!r}")


def _count(text: str) -> int:
    return int(float(text))


class Session:
    """Contexte d'une exécution : configuration, sorties et manifeste"""

    def __init__(self, args: argparse.Namespace, config: ConfigLoader):
        self.args = args
        self.config = config
        self.data_logger = DataLogger(args.out or config.get('data.directory', 'data'))
        self.resolved: Dict[str, Any] = {k: v for k, v in vars(args).items() if k not in ('handler', 'command')}
        self.resolved.update(seed=self.seed, workers=self.workers, profile='quick' if args.quick else 'default')
        self.manifest = RunManifest(args.command, {'parameters': self.resolved, 'settings': config.config},
                                    self.seed, __version__)
        self.primary: Optional[str] = None

    @property
    def seed(self) -> int:
        return self.args.seed if self.args.seed is not None else int(self.config.get('simulation.seed', 0))

    @property
    def workers(self) -> int:
        return self.args.workers if self.args.workers is not None else int(self.config.get('workers', 1))

    def sim(self, key: str, default: Any) -> Any:
        return self.config.profile('quick' if self.args.quick else None).get(key, default)

    def use(self, **values: Any):
        """Enregistre dans le manifeste les valeurs effectivement utilisées"""
        self.resolved.update(values)
        if 'seed' in values:
            self.manifest.seed = int(values['seed'])

    def json(self, data: Dict, filename: str, echo: bool = False):
        if not self.data_logger.save_json(data, filename):
            raise ScripError(f"écriture impossible: {filename}")
        self._record(filename)
        if echo:
            print(json.dumps(json.loads(self.data_logger.path(filename).read_text(encoding='utf-8')), indent=2))

    def csv(self, rows, header: Sequence[str], filename: str):
        if not self.data_logger.save_csv(rows, header, filename):
            raise ScripError(f"écriture impossible: {filename}")
        self._record(filename)

    def _record(self, filename: str):
        self.manifest.add_output(self.data_logger.path(filename))
        if self.primary is None:
            self.primary = filename

    def close(self):
        if self.primary is not None:
            self.manifest.finish().write(self.data_logger, self.primary)


def _system_config(args: argparse.Namespace, seed: int) -> SystemConfig:
    if getattr(args, 'system', None):
        try:
            text = Path(args.system).read_text(encoding='utf-8')
        except OSError as e:
            raise ValidationError(f"fichier de système illisible: {e}")
        config = SystemConfig.from_json(text)
        return config if args.seed is None else config.with_seed(seed)
    if args.p is None and args.q is None:
        return SystemConfig.symmetric(args.n, d=args.d, rule=args.rule, beta=args.beta, seed=seed)
    p = args.p or [1.0 / args.n] * args.n
    q = args.q or p
    return SystemConfig(n=len(p), p=tuple(p), q=tuple(q), d=args.d, rule=args.rule, beta=args.beta, seed=seed)


# ----------------------------------------------------------------------
# Sous-commandes
# ----------------------------------------------------------------------

def cmd_simulate(session: Session) -> int:
    args = session.args
    if args.grouped:
        gs = group_reduction.reduce(args.grouped.split(','))
        T = args.T or session.sim('T', monte_carlo.DEFAULT_T)
        session.use(T=T)
        run = group_reduction.simulate_grouped(gs, T, seed=session.seed, record_every=args.record_every)
        session.csv(
            ({'t': t, **{f'g{g}': v for g, v in enumerate(values)}} for t, values in run.trajectory),
            ['t'] + [f'g{g}' for g in range(len(gs.groups))], 'grouped_trajectory.csv',
        )
        session.json({
            'grouped_system': gs.to_dict(), 'T': T, 'checks': run.checks,
            'zero_returns': len(run.zero_returns), 'mean_zero_return': float(np.mean(run.zero_returns)) if run.zero_returns else None,
            'running_mean_drift': run.running_mean_drift(), 'final_groups': run.final_groups,
        }, 'grouped_summary.json')
        return EXIT_OK

    config = _system_config(args, session.seed)
    warn_if_unstable(config)
    T = args.T or session.sim('T', monte_carlo.DEFAULT_T)
    burn_in = args.burn_in if args.burn_in is not None else session.sim('burn_in', monte_carlo.DEFAULT_BURN_IN)
    M_max = args.M_max
    batches = session.sim('batches', monte_carlo.DEFAULT_BATCHES)
    session.use(T=T, burn_in=burn_in, batches=batches, system=config.to_dict(), seed=config.seed)
    stats = monte_carlo.run_chain(config, T, burn_in, batches)
    estimates = monte_carlo.tails(stats, M_max)
    bound = monte_carlo.check_5_over_M(estimates) if M_max >= 1 and config.d >= 2 else None
    session.csv(
        ({'M': M, 'p': estimates.p_nM[M], 'q': estimates.q_nM[M], 'r': estimates.r_nM[M],
          'stderr_p': estimates.stderr_p[M]} for M in estimates.M_values),
        ['M', 'p', 'q', 'r', 'stderr_p'], 'tails.csv',
    )
    session.json({
        'system': config.to_dict(), 'T': T, 'burn_in': burn_in,
        'p_nM': estimates.p_nM, 'stderr_p': estimates.stderr_p,
        'zero_returns': monte_carlo.zero_return_summary(stats),
        'bound_5_over_M': None if bound is None else {'passed': bound.passed, 'worst_margin': bound.worst_margin,
                                                      'worst_M': bound.worst_M},
        'final_state': stats.final_state,
    }, 'simulate_summary.json')
    return EXIT_OK


def cmd_sweep(session: Session) -> int:
    args = session.args
    T = args.T or session.sim('T', monte_carlo.DEFAULT_T)
    burn_in = args.burn_in if args.burn_in is not None else session.sim('burn_in', monte_carlo.DEFAULT_BURN_IN)
    seeds = spawn_seeds(session.seed, args.seeds)
    session.use(T=T, burn_in=burn_in, seed_list=list(seeds))
    table = monte_carlo.sweep_n(args.n_values, args.M_max, args.d, T, burn_in, seeds, session.workers)
    session.csv(table.rows, monte_carlo.SweepTable.HEADER, 'sweep.csv')
    session.json({'monotonicity': table.monotonicity}, 'sweep_monotonicity.json')
    return EXIT_OK


def cmd_exact2(session: Session) -> int:
    args = session.args
    if args.beta is not None:
        solution = two_agent.solve_intermediate(args.p, args.q, args.beta)
    else:
        solution = two_agent.solve(args.p, args.q, args.d, tie_weighting=args.tie_weighting)
    if solution.stable:
        session.csv(two_agent.tail_curve(solution, args.M_max), ['M', 'tail', 'within'], 'exact2_tail.csv')
    else:
        logger.warning("Système à deux agents instable : aucune loi stationnaire")
    if args.betas:
        curve = two_agent.beta_curve(args.betas, range(args.M_max + 1), args.p, args.q)
        session.csv(curve, ['beta', 'M', 'within'], 'exact2_beta_curve.csv')
    session.json(solution.to_dict(args.M_max), 'exact2.json', echo=True)
    return EXIT_OK


def cmd_oracle(session: Session) -> int:
    args = session.args
    config = _system_config(args, session.seed)
    B = args.B or int(session.config.get(f'oracle.B.{config.n}', 8))
    dense_limit = int(session.config.get('oracle.dense_limit', exact_oracle.DENSE_LIMIT))
    session.use(B=B, dense_limit=dense_limit, system=config.to_dict(), seed=config.seed)
    chain = exact_oracle.build_chain(config, B)
    exact_oracle.stationary(chain, dense_limit=dense_limit)
    session.csv(exact_oracle.marginal_rows(chain), ['token_value', 'agent', 'probability'], 'oracle_marginals.csv')
    zero = (0,) * config.n
    session.json({
        'system': config.to_dict(), 'B': B, 'states': len(chain.states), 'residual': chain.residual,
        'tail': {agent: {M: exact_oracle.tail_abs(chain, agent, M) for M in range(min(B, args.M_max) + 1)}
                 for agent in range(config.n)},
        'expected_return_zero': exact_oracle.expected_return_time(chain, zero),
    }, 'oracle.json')
    return EXIT_OK


def cmd_meanfield(session: Session) -> int:
    args = session.args
    lo = args.lo if args.lo is not None else int(session.config.get('mean_field.lo', mean_field.DEFAULT_LO))
    hi = args.hi if args.hi is not None else int(session.config.get('mean_field.hi', mean_field.DEFAULT_HI))
    dt = args.dt or float(session.config.get('mean_field.dt', mean_field.DEFAULT_DT))
    T = args.T or float(session.config.get('mean_field.T', 200.0))
    session.use(lo=lo, hi=hi, dt=dt, T=T)
    trajectory = mean_field.integrate(mean_field.MeanFieldState.step_initial(lo, hi, args.d), T, dt, args.record_every)
    eq = mean_field.solve_equilibrium(args.d)
    distance = float(np.abs(trajectory.final().z - eq.window(lo, hi).z).sum())
    session.csv(trajectory.rows(), ['t', 'i', 'z'], 'meanfield_trajectory.csv')
    session.json({
        'd': args.d, 'T': T, 'dt': dt, 'window': [lo, hi],
        'l1_to_equilibrium': distance,
        'max_abs_mass': float(np.abs(trajectory.masses).max()),
    }, 'meanfield_summary.json')
    return EXIT_OK


def cmd_equilibrium(session: Session) -> int:
    args = session.args
    eq = mean_field.solve_equilibrium(args.d)
    data = eq.to_dict(M_max=args.M_max)
    if args.d == 2:
        report = mean_field.verify_half_bound(eq, M_max=40)
        data['half_bound'] = {'passed': report.passed, 'min_g': report.minimum}
    session.json(data, 'equilibrium.json', echo=True)
    return EXIT_OK


def cmd_reduce(session: Session) -> int:
    args = session.args
    gs = group_reduction.reduce(args.p.split(','), args.q.split(',') if args.q else None, normalize=args.normalize)
    session.json(gs.to_dict(), 'reduce.json', echo=True)
    return EXIT_OK


def cmd_kidney(session: Session) -> int:
    args = session.args
    section = dict(session.config.get('kidney.population', {}))
    if args.population:
        try:
            section.update(json.loads(Path(args.population).read_text(encoding='utf-8')))
        except (OSError, json.JSONDecodeError) as e:
            raise ValidationError(f"configuration de population illisible: {e}")
    population = kidney.generate_population(kidney.PopulationConfig.from_dict(section), session.seed)
    days = args.days or (session.sim('kidney_days', None) or int(session.config.get('kidney.T_days', 100_000)))
    record_every = args.record_every or int(session.config.get('kidney.record_every', 100))
    session.use(days=days, record_every=record_every, population=section)

    if args.rule == 'both':
        count = args.seeds or (session.sim('kidney_seeds', None) or int(session.config.get('kidney.seeds', 20)))
        session.use(seeds=count)
        comparison = kidney.compare_rules(population, days, spawn_seeds(session.seed, count))
        session.csv(comparison['runs'], ['seed', 'min_token_max_abs', 'uniform_max_abs', 'min_token_smaller'],
                    'kidney_comparison.csv')
        session.json(comparison, 'kidney_comparison.json')
        return EXIT_OK

    result = kidney.run_horizon(population, Rule.parse(args.rule), days, session.seed, record_every, keep_events=args.events)
    session.csv(result.trajectory_rows(), kidney.TRAJECTORY_HEADER, 'kidney_trajectory.csv')
    if args.events:
        session.csv(result.events, kidney.EVENT_HEADER, 'kidney_events.csv')
    session.json({
        'rule': result.rule.value, 'T_days': days, 'population': {'pairs': len(population.pairs),
                                                                  'hospitals': population.n_hospitals},
        'diagnostics': result.diagnostics, 'final_ledger': result.ledger,
        'pool_sizes': result.pool_sizes,
    }, 'kidney_summary.json')
    return EXIT_OK


def cmd_twotype(session: Session) -> int:
    args = session.args
    T = args.T or session.sim('T', monte_carlo.DEFAULT_T)
    burn_in = args.burn_in if args.burn_in is not None else session.sim('burn_in', monte_carlo.DEFAULT_BURN_IN)
    session.use(T=T, burn_in=burn_in, f_values=args.f_values or [args.f])
    if args.pa_values:
        rows = []
        for p_a in args.pa_values:
            alpha = (1.0 - args.f * p_a) / ((args.n - args.f) * p_a)
            for row in monte_carlo.two_type_sweep(args.n, [args.f], alpha, alpha, T, burn_in, session.seed,
                                                  args.M_max, session.workers):
                rows.append({'p_A': p_a, **row})
        session.csv(rows, ['p_A', 'f', 'type', 'M', 'p', 'stderr'], 'twotype_pa_sweep.csv')
        return EXIT_OK
    f_values = args.f_values or [args.f]
    rows = monte_carlo.two_type_sweep(args.n, f_values, args.alpha, args.beta_ratio, T, burn_in, session.seed,
                                      args.M_max, session.workers)
    session.csv(rows, ['f', 'type', 'M', 'p', 'stderr'], 'twotype_tables.csv')
    ode_T = float(session.config.get('mean_field.two_type_T', two_type.DEFAULT_T))
    ode_dt = float(session.config.get('mean_field.two_type_dt', two_type.DEFAULT_DT))
    session.use(ode_T=ode_T, ode_dt=ode_dt)
    ode = two_type.two_type_equilibrium_tails(args.alpha, args.beta_ratio, args.M_max, T=ode_T, dt=ode_dt)
    session.json({'alpha': args.alpha, 'beta_ratio': args.beta_ratio, 'ode': ode}, 'twotype_ode.json')
    return EXIT_OK


def cmd_check(session: Session) -> int:
    args = session.args
    profile = acceptance.Profile(quick=args.quick, seed=session.seed, workers=session.workers)
    results = acceptance.run_acceptance(profile, args.only)
    session.json({'quick': args.quick, 'criteria': [r.to_dict() for r in results]}, 'acceptance_report.json')
    failed = [r.criterion for r in results if not r.passed]
    if failed:
        logger.error(f"Critères en échec: {failed}")
        return EXIT_INTERNAL
    logger.info(f"{len(results)} critère(s) validé(s)")
    return EXIT_OK


# ----------------------------------------------------------------------
# Analyse des arguments
# ----------------------------------------------------------------------

def _add_system_arguments(parser: argparse.ArgumentParser, n_default: int = 2):
    parser.add_argument('--n', type=int, default=n_default, help="nombre d'agents (agents symétriques si --p absent)")
    parser.add_argument('--p', type=_floats, help='loi des demandes, ex. 0.6,0.4')
    parser.add_argument('--q', type=_floats, help='loi des disponibilités (défaut : p)')
    parser.add_argument('--d', type=int, default=2, help='densité de disponibilité')
    parser.add_argument('--rule', default='min_token', choices=[r.value for r in Rule], help='règle de sélection')
    parser.add_argument('--beta', type=float, help='disponibilité intermédiaire (d=2 avec probabilité β)')
    parser.add_argument('--system', help='fichier JSON {n, p, q, d, rule, beta, seed}')


def build_parser() -> argparse.ArgumentParser:
    common = ScripArgumentParser(add_help=False)
    common.add_argument('--config', help='fichier de configuration (défaut : $SCRIP_CONFIG ou config/config.json)')
    common.add_argument('--out', help='répertoire de sortie (défaut : data.directory)')
    common.add_argument('--seed', type=int, help='graine maîtresse')
    common.add_argument('--workers', type=int, help='nombre de processus pour les balayages')
    common.add_argument('--quick', action='store_true', help='profil rapide (horizons réduits)')
    common.add_argument('--log-level', help='niveau de log (DEBUG, INFO, ...)')

    parser = ScripArgumentParser(prog='scrip', description='Simulateur de système à jetons (scrip)')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', required=True, parser_class=ScripArgumentParser)

    p = sub.add_parser('simulate', parents=[common], help='chaîne Monte Carlo et queues stationnaires')
    _add_system_arguments(p)
    p.add_argument('--T', type=_count, help='nombre de périodes')
    p.add_argument('--burn-in', type=_count, help='préfixe ignoré')
    p.add_argument('--M-max', type=int, default=10)
    p.add_argument('--grouped', help="taux rationnels p=q (ex. 1/2,3/10,1/5) : système groupé audité")
    p.add_argument('--record-every', type=int, default=1000)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser('sweep', parents=[common], help='balayage de n pour p_{n,M}')
    p.add_argument('--n-values', type=_ints, default=[2, 3, 5, 10, 20, 50])
    p.add_argument('--d', type=int, default=2)
    p.add_argument('--M-max', type=int, default=10)
    p.add_argument('--seeds', type=int, default=1, help='nombre de graines par n')
    p.add_argument('--T', type=_count)
    p.add_argument('--burn-in', type=_count)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser('exact2', parents=[common], help='forme fermée à deux agents')
    p.add_argument('--p', type=_floats, default=[0.5, 0.5])
    p.add_argument('--q', type=_floats, default=[0.5, 0.5])
    p.add_argument('--d', type=int, default=2)
    p.add_argument('--beta', type=float)
    p.add_argument('--tie-weighting', default='distinct', choices=['distinct', 'multiplicity'])
    p.add_argument('--betas', type=_floats, help='courbe P(|s| ≤ M) en fonction de β, ex. 0.25,0.5,0.75,1')
    p.add_argument('--M-max', type=int, default=10)
    p.set_defaults(handler=cmd_exact2)

    p = sub.add_parser('oracle', parents=[common], help='chaîne tronquée exacte')
    _add_system_arguments(p)
    p.add_argument('--B', type=int, help='rayon de troncature')
    p.add_argument('--M-max', type=int, default=10)
    p.set_defaults(handler=cmd_oracle)

    p = sub.add_parser('meanfield', parents=[common], help='intégration des EDO de champ moyen')
    p.add_argument('--d', type=int, default=2)
    p.add_argument('--T', type=float)
    p.add_argument('--dt', type=float)
    p.add_argument('--lo', type=int)
    p.add_argument('--hi', type=int)
    p.add_argument('--record-every', type=int, default=100)
    p.set_defaults(handler=cmd_meanfield)

    p = sub.add_parser('equilibrium', parents=[common], help="point d'équilibre du modèle infini")
    p.add_argument('--d', type=int, default=2)
    p.add_argument('--M-max', type=int, default=10)
    p.set_defaults(handler=cmd_equilibrium)

    p = sub.add_parser('reduce', parents=[common], help='réduction par groupes (p = q rationnels)')
    p.add_argument('--p', required=True, help='taux rationnels, ex. 1/2,3/10,1/5')
    p.add_argument('--q', help='taux de disponibilité (doivent égaler p)')
    p.add_argument('--normalize', action='store_true', help='normalise p avant réduction')
    p.set_defaults(handler=cmd_reduce)

    p = sub.add_parser('kidney', parents=[common], help="pool d'échange de reins")
    p.add_argument('--population', help='fichier JSON de configuration de population')
    p.add_argument('--rule', default='min_token', choices=['min_token', 'uniform', 'both'])
    p.add_argument('--days', type=_count)
    p.add_argument('--seeds', type=int, help='nombre de runs appariés (avec --rule both)')
    p.add_argument('--record-every', type=int)
    p.add_argument('--events', action='store_true', help="écrit le journal d'événements")
    p.set_defaults(handler=cmd_kidney)

    p = sub.add_parser('twotype', parents=[common], help='tables à deux types (Monte Carlo + EDO)')
    p.add_argument('--n', type=int, default=10)
    p.add_argument('--f', type=int, default=4)
    p.add_argument('--f-values', type=_ints)
    p.add_argument('--pa-values', type=_floats, help='balayage de p_A à f fixé (q = p)')
    p.add_argument('--alpha', type=float, default=10.0)
    p.add_argument('--beta-ratio', type=float, default=10.0)
    p.add_argument('--M-max', type=int, default=4)
    p.add_argument('--T', type=_count)
    p.add_argument('--burn-in', type=_count)
    p.set_defaults(handler=cmd_twotype)

    p = sub.add_parser('check', parents=[common], help="suite de recette")
    p.add_argument('--only', type=_ints, help='numéros de critères à exécuter')
    p.set_defaults(handler=cmd_check)
    return parser


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """
    Point d'entrée : analyse les arguments, exécute la sous-commande

    Returns:
        0 succès ; 1 erreur de validation ou d'usage ; 2 rupture d'invariant ou non-convergence
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_VALIDATION
    except SystemExit as e:
        return int(e.code or 0)

    config = ConfigLoader(args.config)
    setup_logging(args.log_level or config.get('logging.level', 'INFO'), config.get('logging.file', 'logs/scrip.log'))
    handler: Callable[[Session], int] = args.handler
    session = Session(args, config)
    logger.info(f"Démarrage de '{args.command}' (version {__version__})")
    try:
        code = handler(session)
    except (UnstableSystemError, ValidationError) as e:
        logger.error(f"Entrée invalide: {e}")
        return EXIT_VALIDATION
    except (InvariantViolation, ConvergenceError) as e:
        logger.error(f"Echec interne: {e}")
        return EXIT_INTERNAL
    except ScripError as e:
        logger.error(f"Erreur: {e}")
        return EXIT_INTERNAL
    session.close()
    return code


def main():
    """Point d'entrée principal"""
    sys.exit(dispatch())


if __name__ == '__main__':
    main()
