"""Distributed online aggregative optimization for multi-robot target defense."""

from .harness import RunConfig, RunResult, run
from .scenarios import ScenarioSpec, preset

__all__ = ["RunConfig", "RunResult", "ScenarioSpec", "preset", "run"]
__version__ = "0.1.0"
