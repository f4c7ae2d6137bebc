"""Three-way placement comparison on one workload realization.

Every strategy runs in its own fork of a common initialized parent, so
user creation, mobility, and hotspot perturbations land identically and
only the placement differs. The multi-agent variant runs the full
monitoring/placement loop; a thresholds-disabled control variant is
available to show the loop's no-intervention baseline.
"""

from __future__ import annotations

import hashlib
from dataclasses import replace
from fractions import Fraction
from typing import Any, Mapping, Optional, Sequence

from ..agents import (AgentConfig, greedy_placement, random_placement,
                      run_control_loop)
from ..rationals import dumps_canonical, frac, jsonable

STRATEGY_NAMES = ("random", "greedy", "agent", "control")

APP_SERIES_FIELDS = ("requests_total", "requests_successful",
                     "requests_unsuccessful", "response_mean",
                     "response_p95", "network_mean", "waiting_mean",
                     "processing_mean")


def window_grid(horizon: Any, window_length: Any) -> list[tuple[Fraction, Fraction]]:
    horizon = frac(horizon)
    length = frac(window_length)
    if length <= 0 or horizon <= 0:
        raise ValueError("horizon and window_length must be > 0")
    grid = []
    start = Fraction(0)
    while start < horizon:
        end = min(start + length, horizon)
        grid.append((start, end))
        start = end
    return grid


def _unattainable(config: AgentConfig) -> AgentConfig:
    big = frac(10 ** 9)
    return replace(config, node_threshold=big, link_threshold=big,
                   cost_threshold=big)


def _series(client, sim_id: str,
            grid: Sequence[tuple[Fraction, Fraction]]) -> list[dict]:
    series = []
    for t_start, t_end in grid:
        window = {"t_start": jsonable(t_start), "t_end": jsonable(t_end)}
        payload = client.call("get_simulation_application_metrics",
                              {"simulation_id": sim_id, "window": window})
        apps = {}
        for app, row in sorted(payload["applications"].items()):
            apps[app] = {key: row[key] for key in APP_SERIES_FIELDS}
        series.append({"window": window, "apps": apps})
    return series


def _workload_signature(series: Sequence[dict]) -> str:
    emissions = [{app: row["requests_total"]
                  for app, row in entry["apps"].items()}
                 for entry in series]
    return hashlib.sha256(dumps_canonical(emissions).encode()).hexdigest()


def _strategy_summary(client, sim_id: str, series: list[dict],
                      horizon: Any) -> dict:
    placements = client.call("list_simulation_node_placements",
                             {"simulation_id": sim_id})["placements"]
    final_replicas = sum(len(views) for views in placements.values())
    whole = client.call("get_simulation_application_metrics",
                        {"simulation_id": sim_id,
                         "window": {"t_start": 0, "t_end": jsonable(frac(horizon))}})
    network = client.call("get_simulation_network_metrics",
                          {"simulation_id": sim_id,
                           "window": {"t_start": 0,
                                      "t_end": jsonable(frac(horizon))}})
    state = client.call("get_simulation_state", {"simulation_id": sim_id})
    users = client.call("list_simulation_users",
                        {"simulation_id": sim_id})["users"]
    users_per_app: dict[str, int] = {}
    for user in users:
        if user.get("active", True):
            users_per_app[user["app_ref"]] = \
                users_per_app.get(user["app_ref"], 0) + 1
    return {
        "simulation_id": sim_id,
        "final_clock": state["clock"],
        "final_replicas": final_replicas,
        "placement_cost_total": network["cost"]["placement_cost_total"],
        "requests": state.get("counters", {}),
        "users_per_app": dict(sorted(users_per_app.items())),
        "apps": {app: row for app, row in sorted(whole["applications"].items())},
        "series": series,
        "workload_signature": _workload_signature(series),
    }


def run_comparison(documents: Mapping[str, Any],
                   strategies: Sequence[str] = ("random", "greedy", "agent"),
                   horizon: Any = None, window_length: Any = None,
                   seed: Any = None, chains: int = 20,
                   config: Optional[AgentConfig] = None,
                   client=None, wait_timeout: float = 900.0) -> dict:
    """Run each requested strategy on a fork of one initialized parent and
    report per-window series plus final placement figures."""
    unknown = [s for s in strategies if s not in STRATEGY_NAMES]
    if unknown:
        raise ValueError(f"unknown strategies: {unknown}")
    seed = documents.get("seed", 0) if seed is None else seed
    horizon = frac(horizon if horizon is not None
                   else documents.get("horizon", 1000))
    window_length = frac(window_length if window_length is not None
                         else documents.get("window_length", 100))
    config = config or AgentConfig(window_length=window_length)
    grid = window_grid(horizon, window_length)
    user_specs = [dict(u) for u in documents.get("users", [])]

    parent_docs = dict(documents)
    parent_docs["users"] = []
    parent_docs["placements"] = []

    own_client = client is None
    if own_client:
        # Imported here: the gateway's tool catalog builds scenarios, so a
        # module-level import would be circular.
        from ..gateway import loopback_client
        client, _server = loopback_client(seed=seed, actor="comparison")
    try:
        parent = client.call("create_simulation",
                             {"scenario": jsonable(parent_docs),
                              "name": "comparison-parent"})["simulation_id"]
        client.call("initialize_simulation", {"simulation_id": parent})

        report: dict[str, Any] = {
            "scenario": {
                "profile": documents.get("profile"),
                "seed": jsonable(seed),
                "horizon": jsonable(horizon),
                "window_length": jsonable(window_length),
                "hotspot": documents.get("hotspot"),
                "parent": parent,
            },
            "strategies": {},
        }

        for strategy in strategies:
            sid = client.call("fork_simulation",
                              {"simulation_id": parent, "name": strategy}
                              )["simulation_id"]
            timeline = None
            if strategy == "random":
                random_placement(client, sid, user_specs, chains=chains,
                                 seed=seed)
            elif strategy == "greedy":
                greedy_placement(client, sid, user_specs)
            elif strategy in ("agent", "control"):
                random_placement(client, sid, user_specs, chains=chains,
                                 seed=seed)
                loop_config = config if strategy == "agent" \
                    else _unattainable(config)
                timeline = run_control_loop(client, sid, horizon,
                                            window_length, loop_config,
                                            wait_timeout=wait_timeout)
            if strategy in ("random", "greedy"):
                client.call("schedule_for",
                            {"simulation_id": sid, "start": 0,
                             "duration": jsonable(horizon)})
                settled = client.call("wait_simulation_until_ready",
                                      {"simulation_id": sid,
                                       "timeout": wait_timeout})
                if settled["state"] != "paused":
                    raise RuntimeError(
                        f"{strategy} run entered {settled['state']}")

            summary = _strategy_summary(client, sid, _series(client, sid, grid),
                                        horizon)
            if timeline is not None:
                summary["timeline"] = timeline["windows"]
                summary["actions_total"] = timeline["actions_total"]
                summary["agent_config"] = timeline["config"]
            report["strategies"][strategy] = summary

        signatures = {s: report["strategies"][s]["workload_signature"]
                      for s in strategies}
        report["workload_equivalent"] = len(set(signatures.values())) <= 1
        report["workload_signatures"] = signatures
        return report
    finally:
        if own_client:
            client.close()
