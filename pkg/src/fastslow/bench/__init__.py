"""Experiment orchestration, result persistence and plot-ready exports."""

from .config import DEFAULT_METHODS, METHODS, ConfigError, ExperimentConfig, MethodSpec, default_config
from .export import (
    ExportError,
    cost_grid,
    cost_to_reach,
    export_policy_grid,
    export_results,
    near_final_level,
    percentile_curves,
    trend_summary,
)
from .runner import RunRecord, records_from_json, records_to_json, run_experiment, run_one, solve_method

__all__ = [
    "DEFAULT_METHODS",
    "METHODS",
    "ConfigError",
    "ExperimentConfig",
    "ExportError",
    "MethodSpec",
    "RunRecord",
    "cost_grid",
    "cost_to_reach",
    "default_config",
    "export_policy_grid",
    "export_results",
    "near_final_level",
    "percentile_curves",
    "records_from_json",
    "records_to_json",
    "run_experiment",
    "run_one",
    "solve_method",
    "trend_summary",
]
