"""Adaptive placement layer: monitoring and placement agents over the
tool surface, plus random and greedy baselines."""

from .baselines import greedy_placement, random_placement
from .config import STRATEGIES, AgentConfig
from .loop import run_control_loop
from .monitor import MonitoringAgent, WindowSnapshot
from .placement import (ACTION_KINDS, AppContext, PlacementAction,
                        PlacementAgent, WorldView, generate_actions,
                        score_node, select_strategy)

__all__ = [
    "ACTION_KINDS",
    "STRATEGIES",
    "AgentConfig",
    "AppContext",
    "MonitoringAgent",
    "PlacementAction",
    "PlacementAgent",
    "WindowSnapshot",
    "WorldView",
    "generate_actions",
    "greedy_placement",
    "random_placement",
    "run_control_loop",
    "score_node",
    "select_strategy",
]
