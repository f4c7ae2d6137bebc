"""The window-by-window control loop: advance, observe, decide, act."""

from __future__ import annotations

from typing import Any, Optional

from ..rationals import frac, jsonable
from .config import AgentConfig
from .monitor import MonitoringAgent
from .placement import PlacementAgent, select_strategy


def run_control_loop(client, sim_id: str, horizon: Any,
                     window_length: Any = None,
                     config: Optional[AgentConfig] = None,
                     wait_timeout: float = 600.0) -> dict:
    """Drive one simulation to `horizon` in actionable windows. Each
    iteration schedules the next window, waits for it to settle, builds
    the monitoring snapshot, selects a strategy, and executes at most
    `budget` placement actions before the next window starts."""
    config = config or AgentConfig()
    length = frac(window_length) if window_length is not None \
        else config.window_length
    if length <= 0:
        raise ValueError("window length must be > 0")
    horizon = frac(horizon)

    if not config.latency_requirements:
        rows = client.call("list_simulation_deployed_applications",
                           {"simulation_id": sim_id})["applications"]
        config = config.with_requirements(
            {row["app"]: row["latency_requirement"] for row in rows})

    monitor = MonitoringAgent(client, config)
    agent = PlacementAgent(client, config)

    state = client.call("get_simulation_state", {"simulation_id": sim_id})
    clock = frac(state["clock"])
    index = 0
    windows = []
    while clock < horizon:
        t_end = min(clock + length, horizon)
        client.call("schedule_for",
                    {"simulation_id": sim_id, "start": jsonable(clock),
                     "duration": jsonable(t_end - clock)},
                    window_index=index)
        settled = client.call("wait_simulation_until_ready",
                              {"simulation_id": sim_id,
                               "timeout": wait_timeout},
                              window_index=index)
        if settled["state"] != "paused":
            raise RuntimeError(
                f"simulation {sim_id} entered {settled['state']} during "
                f"window {index}")
        window = {"t_start": jsonable(clock), "t_end": jsonable(t_end)}
        snapshot = monitor.build_snapshot(sim_id, window, index)
        strategy = select_strategy(snapshot, config)
        actions = agent.plan(sim_id, snapshot, strategy)
        outcomes = agent.execute(sim_id, actions, window_index=index)
        windows.append({
            "index": index,
            "window": window,
            "strategy": strategy,
            "observed": {
                "overloaded": sorted(snapshot.overloaded),
                "congested": sorted(snapshot.congested),
                "degraded": sorted(snapshot.degraded),
                "failed": sorted(snapshot.failed),
                "placement_cost": jsonable(snapshot.placement_cost),
            },
            "actions": [a.to_jsonable() for a in actions],
            "outcomes": outcomes,
        })
        clock = t_end
        index += 1

    return {
        "simulation_id": sim_id,
        "horizon": jsonable(horizon),
        "window_length": jsonable(length),
        "windows": windows,
        "actions_total": sum(len(w["actions"]) for w in windows),
        "dropped_total": len(agent.dropped),
        "config": config.to_document(),
    }
