"""Discrete-event simulator for cloud-edge infrastructures, exposed as a
managed simulation service with an MCP tool gateway and an adaptive
placement control loop."""

__version__ = "0.1.0"

from .engine import Engine
from .metrics import Window, make_window, whole_run_window
from .service import SimulationService
from .topology import Topology, load_topology
from .workload import Application, ProcessSpec, UserSpec

__all__ = [
    "Application",
    "Engine",
    "ProcessSpec",
    "SimulationService",
    "Topology",
    "UserSpec",
    "Window",
    "__version__",
    "load_topology",
    "make_window",
    "whole_run_window",
]
