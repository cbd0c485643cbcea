"""Scenario runner wiring plant, control, helm, navigation and gateway,
plus configuration loading, telemetry persistence and metrics."""

from .config import ConfigError, Scenario, VehicleConfig, load_scenario, load_vehicle_config
from .metrics import RunMetrics, TurnMetric, compare_metrics, fit_turn
from .runner import RunResult, run_scenario

__all__ = [
    "ConfigError",
    "RunMetrics",
    "RunResult",
    "Scenario",
    "TurnMetric",
    "VehicleConfig",
    "compare_metrics",
    "fit_turn",
    "load_scenario",
    "load_vehicle_config",
    "run_scenario",
]
