"""
Module champ moyen : modèle infini (fractions de queue z_i), dérive, intégration,
point d'équilibre, borne (1/2)^M et contrôle de Lipschitz
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.optimize

from .errors import ConvergenceError, InvariantViolation, ValidationError

logger = logging.getLogger(__name__)

# La queue de gauche 1 - π_{-i} ≈ 0.4·2^{-i} : lo=-45 la ramène sous 1e-14
DEFAULT_LO = -45
DEFAULT_HI = 30
DEFAULT_DT = 0.01
BOUNDARY_THRESHOLD = 1e-10
CLAMP_TOLERANCE = 1e-9


@dataclass
class MeanFieldState:
    """z_i = fraction des agents ayant au moins i jetons, pour i ∈ [lo, hi]"""

    lo: int
    hi: int
    z: np.ndarray
    d: int = 2

    def __post_init__(self):
        if not self.lo < 0 < self.hi:
            raise ValidationError(f"fenêtre invalide: il faut lo < 0 < hi (lo={self.lo}, hi={self.hi})")
        self.z = np.asarray(self.z, dtype=np.float64)
        if self.z.shape != (self.hi - self.lo + 1,):
            raise ValidationError(f"z doit avoir {self.hi - self.lo + 1} composantes")
        if self.d < 1:
            raise ValidationError(f"d doit être ≥ 1 (reçu {self.d})")

    @classmethod
    def step_initial(cls, lo: int = DEFAULT_LO, hi: int = DEFAULT_HI, d: int = 2) -> 'MeanFieldState':
        """Condition initiale : z_i = 1 pour i ≤ 0, 0 pour i ≥ 1"""
        indices = np.arange(lo, hi + 1)
        return cls(lo, hi, (indices <= 0).astype(np.float64), d)

    @classmethod
    def from_tokens(cls, s: Sequence[int], lo: int, hi: int, d: int = 2) -> 'MeanFieldState':
        """Etat empirique d'un vecteur de jetons fini"""
        tokens = np.asarray(s)
        indices = np.arange(lo, hi + 1)
        z = (tokens[None, :] >= indices[:, None]).mean(axis=1)
        return cls(lo, hi, z, d)

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    def at(self, i: int) -> float:
        if i < self.lo:
            return 1.0
        if i > self.hi:
            return 0.0
        return float(self.z[i - self.lo])

    def with_z(self, z: np.ndarray) -> 'MeanFieldState':
        return MeanFieldState(self.lo, self.hi, z, self.d)

    def is_valid(self, tol: float = CLAMP_TOLERANCE) -> bool:
        z = self.z
        return bool(np.all(z >= -tol) and np.all(z <= 1 + tol) and np.all(np.diff(z) <= tol))


def _drift_vector(z: np.ndarray, d: int) -> np.ndarray:
    padded = np.concatenate(([1.0], z, [0.0]))
    powered = padded ** d
    return (powered[:-2] - powered[1:-1]) - (z - padded[2:])


def drift(state: MeanFieldState) -> np.ndarray:
    """dz_i/dt = (z_{i-1}^d - z_i^d) - (z_i - z_{i+1}), avec z_{lo-1}=1 et z_{hi+1}=0"""
    return _drift_vector(state.z, state.d)


def mass(state: MeanFieldState) -> float:
    """Σ_{i≥1} z_i - Σ_{i≤0} (1 - z_i) : nombre moyen de jetons, nul le long des trajectoires"""
    positive = state.indices >= 1
    return float(math.fsum(state.z[positive]) - math.fsum(1.0 - state.z[~positive]))


def _rk4(z: np.ndarray, dt: float, field) -> np.ndarray:
    k1 = field(z)
    k2 = field(z + 0.5 * dt * k1)
    k3 = field(z + 0.5 * dt * k2)
    k4 = field(z + dt * k3)
    return z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _clamp(z: np.ndarray, label: str, t: float) -> np.ndarray:
    worst = max(float(-z.min()), float(z.max() - 1.0), float(np.diff(z).max(initial=0.0)))
    if worst <= 0.0:
        return z
    if worst > CLAMP_TOLERANCE:
        logger.warning(f"{label}: état hors bornes/monotonie de {worst:.2e} à t={t:.3f}, correction appliquée")
    return np.minimum.accumulate(np.clip(z, 0.0, 1.0))


@dataclass
class Trajectory:
    """Trajectoire échantillonnée : instants et états"""

    times: np.ndarray
    states: np.ndarray
    lo: int
    hi: int
    d: int
    masses: Optional[np.ndarray] = None

    def final(self) -> MeanFieldState:
        return MeanFieldState(self.lo, self.hi, self.states[-1], self.d)

    def rows(self) -> List[Dict[str, float]]:
        """Lignes CSV t,i,z"""
        indices = np.arange(self.lo, self.hi + 1)
        return [
            {'t': float(t), 'i': int(i), 'z': float(v)}
            for t, z in zip(self.times, self.states)
            for i, v in zip(indices, z)
        ]


def integrate(state: MeanFieldState, T: float, dt: float = DEFAULT_DT, record_every: int = 100) -> Trajectory:
    """
    Intègre les EDO de champ moyen par Runge-Kutta classique d'ordre 4

    Args:
        state: Etat initial
        T: Horizon
        dt: Pas de temps
        record_every: Enregistrer un état tous les `record_every` pas

    Returns:
        Trajectory (avec la masse à chaque enregistrement)
    """
    if T <= 0 or dt <= 0:
        raise ValidationError(f"T et dt doivent être > 0 (T={T}, dt={dt})")
    steps = int(round(T / dt))
    d = state.d
    z = state.z.copy()
    times, states, masses = [0.0], [z.copy()], [mass(state)]
    warned = False
    for k in range(1, steps + 1):
        z = _clamp(_rk4(z, dt, lambda v: _drift_vector(v, d)), 'integrate', k * dt)
        if not warned and (1.0 - z[0] > BOUNDARY_THRESHOLD or z[-1] > BOUNDARY_THRESHOLD):
            logger.warning(f"Fenêtre [{state.lo}, {state.hi}] trop étroite: bord gauche 1-z={1.0 - z[0]:.2e}, bord droit z={z[-1]:.2e}")
            warned = True
        if k % record_every == 0 or k == steps:
            times.append(k * dt)
            states.append(z.copy())
            masses.append(mass(state.with_z(z)))
    return Trajectory(np.array(times), np.array(states), state.lo, state.hi, d, np.array(masses))


def balance_residual(pi0: float, d: int = 2, tol: float = 1e-12) -> float:
    """
    Résidu de l'équation d'équilibre Σ_{i≥1} π0^{d^i} - Σ_{i≥0} (1 - π0^{d^{-i}})

    Négatif à π0=1/2 et positif à π0=3/4 pour d=2 (fonction croissante de π0).
    """
    if not 0.0 < pi0 < 1.0:
        raise ValidationError(f"pi0 doit être dans (0,1) (reçu {pi0})")
    cutoff = tol * 1e-3
    log_pi = math.log(pi0)

    right = []
    i = 1
    while True:
        term = math.exp(log_pi * d ** i)
        right.append(term)
        if term < cutoff:
            break
        i += 1

    # 1 - π0^{d^{-i}} : rapport de termes successifs ≤ 1/(1 + (d-1)π0)
    rho = 1.0 / (1.0 + (d - 1) * pi0)
    left = []
    i = 0
    while True:
        term = -math.expm1(log_pi * d ** (-i))
        left.append(term)
        if term < cutoff and term * rho / (1.0 - rho) < cutoff:
            break
        i += 1
    return math.fsum(right) - math.fsum(left)


@dataclass(frozen=True)
class EquilibriumPoint:
    """Point fixe π_i = π0^{d^i} du modèle infini"""

    pi0: float
    d: int = 2
    residual: float = 0.0

    def pi(self, i: int) -> float:
        return math.exp(math.log(self.pi0) * float(self.d) ** i)

    def window(self, lo: int = DEFAULT_LO, hi: int = DEFAULT_HI) -> MeanFieldState:
        z = np.array([self.pi(i) for i in range(lo, hi + 1)])
        return MeanFieldState(lo, hi, z, self.d)

    def p_inf(self, M: int) -> float:
        """P(|s| ≤ M) à l'équilibre : π_{-M} - π_{M+1}"""
        return self.pi(-M) - self.pi(M + 1)

    def to_dict(self, lo: int = -10, hi: int = 10, M_max: int = 10) -> Dict:
        return {
            'pi0': self.pi0,
            'd': self.d,
            'residual': self.residual,
            'window': [[i, self.pi(i)] for i in range(lo, hi + 1)],
            'p_inf': [[M, self.p_inf(M)] for M in range(1, M_max + 1)],
        }


def solve_equilibrium(d: int = 2, tol: float = 1e-12) -> EquilibriumPoint:
    """
    Trouve π0 par bisection sur l'équation d'équilibre

    Pour d=2 l'encadrement (1/2, 3/4) est garanti ; pour d>2 on balaye (0,1).

    Raises:
        ConvergenceError: si l'encadrement échoue ou si le résidu reste au-dessus de tol
    """
    if d < 2:
        raise ValidationError(f"l'équilibre n'existe que pour d ≥ 2 (reçu {d})")

    def f(x: float) -> float:
        return balance_residual(x, d, tol)

    if d == 2:
        lower, upper = 0.5, 0.75
    else:
        grid = np.linspace(0.01, 0.99, 99)
        signs = np.sign([f(x) for x in grid])
        changes = np.nonzero(np.diff(signs) > 0)[0]
        if changes.size == 0:
            raise ConvergenceError(f"aucun changement de signe sur (0,1) pour d={d}")
        lower, upper = float(grid[changes[0]]), float(grid[changes[0] + 1])
    f_lower, f_upper = f(lower), f(upper)
    if not (f_lower < 0 < f_upper):
        raise ConvergenceError(f"encadrement invalide: f({lower})={f_lower:.3e}, f({upper})={f_upper:.3e}")

    pi0 = scipy.optimize.bisect(f, lower, upper, xtol=1e-16, maxiter=200)
    residual = f(pi0)
    if abs(residual) >= tol:
        raise ConvergenceError(f"résidu d'équilibre trop grand pour d={d}", residual)
    logger.info(f"Equilibre champ moyen: d={d}, π0={pi0:.12f}, résidu={residual:.2e}")
    return EquilibriumPoint(pi0=pi0, d=d, residual=residual)


@dataclass
class HalfBoundReport:
    """Contrôle de g(M) ≥ 0 (queue en (1/2)^M à la limite champ moyen)"""

    passed: bool
    values: Dict[int, float]

    @property
    def minimum(self) -> float:
        return min(self.values.values())


def half_bound_gap(pi0: float, M: int) -> float:
    """g(M) = π0^{2^{-M}} - π0^{2^{M+1}} - 1 + 2^{-M}, calculé sans annulation catastrophique"""
    log_pi = math.log(pi0)
    return math.expm1(log_pi * 2.0 ** (-M)) - math.exp(log_pi * 2.0 ** (M + 1)) + 2.0 ** (-M)


def verify_half_bound(eq: EquilibriumPoint, M_max: int = 40) -> HalfBoundReport:
    """
    Vérifie g(M) ≥ 0 pour M = 1..M_max

    Raises:
        InvariantViolation: si une valeur est négative
    """
    if eq.d != 2:
        raise ValidationError("la borne (1/2)^M concerne l'équilibre d=2")
    values = {M: half_bound_gap(eq.pi0, M) for M in range(1, M_max + 1)}
    negative = [M for M, g in values.items() if g < 0]
    if negative:
        raise InvariantViolation(f"g(M) < 0 pour M={negative}")
    return HalfBoundReport(passed=True, values=values)


def random_state(rng: np.random.Generator, lo: int, hi: int, d: int) -> MeanFieldState:
    """Etat admissible aléatoire : suite décroissante dans [0,1]"""
    size = hi - lo + 1
    z = np.sort(rng.random(size))[::-1]
    # on force parfois des plateaux aux bords pour couvrir les états proches des conditions limites
    cut = rng.integers(0, size + 1)
    z[:cut] = np.maximum(z[:cut], rng.random() ** 0.1)
    return MeanFieldState(lo, hi, np.minimum.accumulate(z), d)


def lipschitz_spot_check(d: int = 2, samples: int = 10_000, lo: int = -10, hi: int = 10, seed: int = 0) -> float:
    """
    Plus grand rapport |F(x) - F(y)|_1 / |x - y|_1 sur des paires aléatoires d'états

    Returns:
        Le rapport maximal observé (à comparer à 2 + 2d)
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        x = random_state(rng, lo, hi, d)
        y = random_state(rng, lo, hi, d)
        distance = float(np.abs(x.z - y.z).sum())
        if distance == 0.0:
            continue
        worst = max(worst, float(np.abs(drift(x) - drift(y)).sum()) / distance)
    bound = 2 + 2 * d
    if worst > bound:
        logger.warning(f"Rapport de Lipschitz {worst:.4f} au-dessus de {bound}")
    return worst
