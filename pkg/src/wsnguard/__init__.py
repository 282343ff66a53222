"""Deterministic simulator of a layered sensor network under sleep-deprivation attack."""

from .config import ConfigError, ScenarioConfig, validate
from .engine import RunTrace
from .metrics import RunMetrics, compare, compute
from .oracle import OracleReport, verify
from .simulation import Simulation, run

__all__ = [
    "ConfigError",
    "OracleReport",
    "RunMetrics",
    "RunTrace",
    "ScenarioConfig",
    "Simulation",
    "compare",
    "compute",
    "run",
    "validate",
    "verify",
]
