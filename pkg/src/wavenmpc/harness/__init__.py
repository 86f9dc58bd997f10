"""Closed-loop missions, metrics, the comparative study and diagnostics."""

from .config import (CONTROLLER_LABELS, CONTROLLERS, WAVE_CASES, MissionSpec, ScenarioConfig,
                     WaveCase, load_config, save_config)
from .diagnostics import DswpReport, dswp_diagnostics
from .matrix import CellResult, MatrixSummary, run_cell, run_matrix
from .metrics import MetricsReport, compute_metrics, metrics_from_arrays, percentage_reduction
from .mission import CSV_COLUMNS, MissionAborted, MissionLog, read_log_csv, run_mission
from .reference import Reference, generate_reference
from .validate import Check, run_validation

__all__ = [
    "CONTROLLER_LABELS", "CONTROLLERS", "WAVE_CASES", "ScenarioConfig", "WaveCase", "load_config",
    "save_config", "MissionSpec", "DswpReport", "dswp_diagnostics", "CellResult", "MatrixSummary",
    "run_cell", "run_matrix", "MetricsReport", "compute_metrics", "metrics_from_arrays",
    "percentage_reduction", "CSV_COLUMNS", "MissionAborted", "MissionLog", "read_log_csv",
    "run_mission", "Reference", "generate_reference", "Check", "run_validation",
]
