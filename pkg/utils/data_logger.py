"""
Module pour l'enregistrement des résultats (JSON et CSV)
"""

import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)


def _plain(value: Any) -> Any:
    """Convertit les scalaires et tableaux numpy en types JSON natifs"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        number = float(value)
        return number if math.isfinite(number) else None
    return value


class DataLogger:
    """Classe pour enregistrer les résultats des analyses"""

    def __init__(self, data_dir: str = 'data'):
        """
        Initialise le logger de données

        Args:
            data_dir: Répertoire pour stocker les résultats
        """
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)

    def path(self, filename: str) -> Path:
        return self.data_dir / filename

    def save_json(self, data: Dict, filename: str) -> bool:
        """
        Enregistre les données au format JSON (clés triées, sortie stable)

        Args:
            data: Données à enregistrer
            filename: Nom du fichier

        Returns:
            True si succès, False sinon
        """
        try:
            filepath = self.path(filename)
            with open(filepath, 'w', encoding='utf-8') as f:
                json.dump(_plain(data), f, indent=2, ensure_ascii=False, sort_keys=True)
                f.write('\n')
            logger.debug(f"Données sauvegardées: {filepath}")
            return True
        except Exception as e:
            logger.error(f"Erreur sauvegarde JSON: {e}")
            return False

    def save_csv(self, rows: Iterable[Dict], header: Sequence[str], filename: str) -> bool:
        """
        Enregistre des lignes au format CSV (écrase le fichier)

        Args:
            rows: Lignes (dictionnaires)
            header: Colonnes, dans l'ordre
            filename: Nom du fichier CSV

        Returns:
            True si succès, False sinon
        """
        try:
            filepath = self.path(filename)
            with open(filepath, 'w', newline='', encoding='utf-8') as f:
                writer = csv.DictWriter(f, fieldnames=list(header), extrasaction='ignore')
                writer.writeheader()
                for row in rows:
                    writer.writerow(self._flatten_dict(_plain(row)))
            logger.debug(f"CSV écrit: {filepath}")
            return True
        except Exception as e:
            logger.error(f"Erreur sauvegarde CSV: {e}")
            return False

    def load_json(self, filename: str) -> Optional[Dict]:
        try:
            with open(self.path(filename), 'r', encoding='utf-8') as f:
                return json.load(f)
        except Exception as e:
            logger.error(f"Erreur lecture JSON: {e}")
            return None

    def _flatten_dict(self, d: Dict, parent_key: str = '', sep: str = '_') -> Dict:
        """Aplatit un dictionnaire imbriqué"""
        items: List = []
        for k, v in d.items():
            new_key = f"{parent_key}{sep}{k}" if parent_key else k
            if isinstance(v, dict):
                items.extend(self._flatten_dict(v, new_key, sep=sep).items())
            else:
                items.append((new_key, v))
        return dict(items)
