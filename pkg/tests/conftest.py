import numpy as np
import pytest

from aggdefense.harness import RunConfig, run
from aggdefense.scenarios import PRESETS, preset


class _RunCache:
    """Full-length preset runs shared across the session (each takes a few seconds)."""

    def __init__(self):
        self._runs = {}

    def __call__(self, name: str):
        if name not in self._runs:
            self._runs[name] = run(RunConfig(preset(name)))
        return self._runs[name]

    def all(self):
        return {name: self(name) for name in sorted(PRESETS)}


@pytest.fixture(scope="session")
def preset_runs():
    return _RunCache()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
