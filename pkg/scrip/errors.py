"""
Exceptions du simulateur de jetons
"""


class ScripError(Exception):
    """Erreur de base du projet"""


class ValidationError(ScripError, ValueError):
    """Entrée invalide (configuration, distribution, paramètres)"""


class InfeasibleError(ValidationError):
    """Calcul exact trop gros pour être énuméré"""


class UnstableSystemError(ScripError):
    """Quantité stationnaire demandée pour un système instable"""


class InvariantViolation(ScripError, RuntimeError):
    """Un invariant garanti par la théorie est violé : bug d'implémentation"""


class ConvergenceError(ScripError, RuntimeError):
    """Un solveur n'a pas convergé"""

    def __init__(self, message: str, residual: float = float('nan')):
        super().__init__(f"{message} (résidu={residual:.3e})")
        self.residual = residual
