"""
Module pour charger la configuration du projet
"""

import copy
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_FILE = 'config/config.json'

# variable d'environnement -> clé pointée
ENV_OVERRIDES = {
    'SCRIP_LOG_LEVEL': 'logging.level',
    'SCRIP_DATA_DIR': 'data.directory',
}


class ConfigLoader:
    """Classe pour charger et gérer la configuration"""

    def __init__(self, config_file: Optional[str] = None, use_env: bool = True):
        """
        Initialise le chargeur de configuration

        Args:
            config_file: Chemin vers le fichier de configuration (défaut : $SCRIP_CONFIG
                puis config/config.json)
            use_env: Applique les surcharges d'environnement (.env compris)
        """
        if use_env:
            load_dotenv()
        self.use_env = use_env
        path = config_file or (os.environ.get('SCRIP_CONFIG') if use_env else None) or DEFAULT_CONFIG_FILE
        self.config_file = Path(path)
        self.config: Dict[str, Any] = {}
        self.load_config()

    def load_config(self) -> Dict[str, Any]:
        """
        Charge la configuration depuis le fichier JSON

        Les clés absentes du fichier reprennent la valeur par défaut.

        Returns:
            Dictionnaire de configuration
        """
        defaults = self._get_default_config()
        try:
            if self.config_file.exists():
                with open(self.config_file, 'r', encoding='utf-8') as f:
                    self.config = _merge(defaults, json.load(f))
                logger.info(f"Configuration chargée: {self.config_file}")
            else:
                logger.warning(f"Fichier de configuration non trouvé: {self.config_file}")
                self.config = defaults
                self.save_config()
        except Exception as e:
            logger.error(f"Erreur chargement configuration: {e}")
            self.config = defaults

        if self.use_env:
            for variable, key in ENV_OVERRIDES.items():
                value = os.environ.get(variable)
                if value:
                    self.set(key, value)
                    logger.debug(f"{key} surchargé par {variable}")
        return self.config

    def save_config(self):
        """Sauvegarde la configuration actuelle"""
        try:
            self.config_file.parent.mkdir(parents=True, exist_ok=True)
            with open(self.config_file, 'w', encoding='utf-8') as f:
                json.dump(self.config, f, indent=2, ensure_ascii=False)
            logger.info(f"Configuration sauvegardée: {self.config_file}")
        except Exception as e:
            logger.error(f"Erreur sauvegarde configuration: {e}")

    def get(self, key: str, default: Any = None) -> Any:
        """
        Récupère une valeur de configuration

        Args:
            key: Clé de configuration (peut être nested avec '.', ex: 'simulation.burn_in')
            default: Valeur par défaut si la clé n'existe pas

        Returns:
            Valeur de configuration ou valeur par défaut
        """
        value = self.config
        for k in key.split('.'):
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default
        return value

    def set(self, key: str, value: Any):
        node = self.config
        *parents, last = key.split('.')
        for k in parents:
            node = node.setdefault(k, {})
        node[last] = value

    def profile(self, name: Optional[str]) -> Dict[str, Any]:
        """Section simulation, surchargée par le profil demandé (ex. 'quick')"""
        section = dict(self.get('simulation', {}))
        if name:
            section.update(self.get(f'profiles.{name}', {}))
        return section

    def _get_default_config(self) -> Dict[str, Any]:
        """Retourne la configuration par défaut"""
        return {
            "simulation": {
                "T": 20000000,
                "burn_in": 500000,
                "batches": 20,
                "seed": 0
            },
            "profiles": {
                "quick": {
                    "T": 2000000,
                    "burn_in": 200000,
                    "kidney_days": 20000,
                    "kidney_seeds": 5
                }
            },
            "oracle": {
                "B": {"2": 60, "3": 20, "4": 8},
                "dense_limit": 4000
            },
            "mean_field": {
                "lo": -45,
                "hi": 30,
                "dt": 0.01,
                "T": 200.0,
                "two_type_T": 1000.0,
                "two_type_dt": 0.02
            },
            "kidney": {
                "T_days": 100000,
                "record_every": 100,
                "seeds": 20,
                "population": {
                    "n_pairs": 1881,
                    "n_hospitals": 84
                }
            },
            "data": {
                "directory": "data"
            },
            "logging": {
                "level": "INFO",
                "file": "logs/scrip.log"
            },
            "workers": 1
        }


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    result = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(result.get(key), dict):
            result[key] = _merge(result[key], value)
        else:
            result[key] = value
    return result
