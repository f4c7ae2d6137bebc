"""Scenario construction, strategy comparison runs, and report export."""

from .builder import (APP_COORDINATION, APP_PERCEPTION, APP_TELEMETRY,
                      application_catalog, build_scenario_documents,
                      default_documents, desk_profile, full_profile,
                      read_scenario, write_scenario)
from .comparison import run_comparison, window_grid
from .export import read_report, write_report

__all__ = [
    "APP_COORDINATION", "APP_PERCEPTION", "APP_TELEMETRY",
    "application_catalog", "build_scenario_documents", "default_documents",
    "desk_profile", "full_profile", "read_report", "read_scenario",
    "run_comparison", "window_grid", "write_report", "write_scenario",
]
