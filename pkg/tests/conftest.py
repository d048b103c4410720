"""
Fixtures communes et option --runslow
"""

import pytest

from scrip.dynamics import SystemConfig


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='exécute aussi les tests longs')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='test long : relancer avec --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def symmetric_two():
    return SystemConfig.symmetric(2, d=2, seed=7)


@pytest.fixture
def clean_env(monkeypatch, tmp_path):
    """Répertoire de travail vierge, sans surcharge d'environnement"""
    for variable in ('SCRIP_CONFIG', 'SCRIP_LOG_LEVEL', 'SCRIP_DATA_DIR'):
        monkeypatch.delenv(variable, raising=False)
    monkeypatch.chdir(tmp_path)
    return tmp_path
