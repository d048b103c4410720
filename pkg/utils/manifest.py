"""
Manifeste de run : sous-commande, configuration résolue, graine, sorties, version, durée
"""

import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from .data_logger import DataLogger

logger = logging.getLogger(__name__)


@dataclass
class RunManifest:
    subcommand: str
    config: Dict[str, Any]
    seed: Optional[int]
    version: str
    outputs: List[str] = field(default_factory=list)
    duration_s: float = 0.0
    started: float = field(default_factory=time.perf_counter, repr=False)

    def add_output(self, path: Path):
        self.outputs.append(str(path))

    def finish(self) -> 'RunManifest':
        self.duration_s = round(time.perf_counter() - self.started, 3)
        return self

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data.pop('started')
        return data

    def write(self, data_logger: DataLogger, output: str) -> bool:
        """Ecrit <sortie>.manifest.json à côté de la sortie principale"""
        filename = f"{Path(output).name}.manifest.json"
        ok = data_logger.save_json(self.to_dict(), filename)
        if ok:
            logger.info(f"Manifeste écrit: {data_logger.path(filename)}")
        return ok
