"""Discrete-event simulator for named-data pervasive edge computing."""

from .config import Policy, ScenarioConfig, SchemaError, load_config, validate
from .engine import RuntimeInvariantViolation
from .metrics import MalformedTrace, Metrics, metrics_fold
from .names import InvocationName, MigrationName, Name, ThunkName, parse_name
from .sim import Simulation, run

__all__ = [
    "InvocationName",
    "MalformedTrace",
    "Metrics",
    "MigrationName",
    "Name",
    "Policy",
    "RuntimeInvariantViolation",
    "ScenarioConfig",
    "SchemaError",
    "Simulation",
    "ThunkName",
    "load_config",
    "metrics_fold",
    "parse_name",
    "run",
    "validate",
]

__version__ = "0.1.0"
