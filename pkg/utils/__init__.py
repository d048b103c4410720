"""
Module utils - Utilitaires pour le projet
"""

from .data_logger import DataLogger
from .config_loader import ConfigLoader
from .manifest import RunManifest

__all__ = ['DataLogger', 'ConfigLoader', 'RunManifest']
