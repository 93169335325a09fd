"""Discrete-event simulator and cost engine for spot-market batch provisioning."""

from .engine import Engine, EventQueue, RunResult, SimClock, run_scenario
from .metrics import MetricsReport, build_report
from .scenario import Scenario, ScenarioError, load_scenario

__version__ = "0.1.0"

__all__ = [
    "Engine",
    "EventQueue",
    "MetricsReport",
    "RunResult",
    "Scenario",
    "ScenarioError",
    "SimClock",
    "build_report",
    "load_scenario",
    "run_scenario",
    "__version__",
]
