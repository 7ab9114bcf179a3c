"""
Shared pytest configuration
"""

import pytest

from moreau_w2.utils.config import THREADS_ENV


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long seeded sweeps (deselect with -m 'not slow')")


@pytest.fixture(autouse=True)
def single_worker(monkeypatch):
    """Sweeps run serially unless a test asks otherwise"""
    monkeypatch.setenv(THREADS_ENV, "1")
