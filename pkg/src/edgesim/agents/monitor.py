"""Monitoring side of the control loop: turn one window's metric tool
outputs into a structured snapshot.

The only state carried across windows is the per-node consecutive-
overload counter; everything else is rebuilt from tool responses, so a
restarted monitor reaches the same conclusions given the same metrics.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional

from ..rationals import frac, jsonable
from .config import AgentConfig


@dataclass(frozen=True)
class WindowSnapshot:
    index: int
    window: Mapping[str, object]  # {"t_start", "t_end"} as wire values
    app_p95: Mapping[str, Optional[Fraction]]
    degraded: frozenset
    unsuccessful: Mapping[str, int]
    failed: frozenset  # apps with unsuccessful requests this window
    hops_mean: Mapping[str, Optional[Fraction]]
    node_utilization: Mapping[str, Fraction]
    overloaded: frozenset
    link_utilization: Mapping[str, Fraction]
    congested: frozenset
    placement_cost: Fraction
    users_per_node: Mapping[str, int]

    def to_jsonable(self) -> dict:
        return {
            "index": self.index,
            "window": dict(self.window),
            "app_p95": {a: jsonable(v) for a, v in sorted(self.app_p95.items())},
            "degraded": sorted(self.degraded),
            "unsuccessful": dict(sorted(self.unsuccessful.items())),
            "failed": sorted(self.failed),
            "overloaded": sorted(self.overloaded),
            "congested": sorted(self.congested),
            "placement_cost": jsonable(self.placement_cost),
            "node_utilization": {n: jsonable(u) for n, u
                                 in sorted(self.node_utilization.items())},
            "link_utilization": {k: jsonable(u) for k, u
                                 in sorted(self.link_utilization.items())},
            "users_per_node": dict(sorted(self.users_per_node.items())),
        }


class MonitoringAgent:
    """Builds WindowSnapshots through the metric tools only."""

    def __init__(self, client, config: AgentConfig):
        self.client = client
        self.config = config
        self._overload_streak: dict[str, int] = {}

    def reset(self) -> None:
        self._overload_streak.clear()

    def build_snapshot(self, sim_id: str, window: Mapping[str, object],
                       index: int) -> WindowSnapshot:
        cfg = self.config
        apps_payload = self.client.call(
            "get_simulation_application_metrics",
            {"simulation_id": sim_id, "window": dict(window)},
            window_index=index)
        net = self.client.call(
            "get_simulation_network_metrics",
            {"simulation_id": sim_id, "window": dict(window),
             "node_threshold": jsonable(cfg.node_threshold),
             "link_threshold": jsonable(cfg.link_threshold)},
            window_index=index)

        app_p95: dict[str, Optional[Fraction]] = {}
        hops_mean: dict[str, Optional[Fraction]] = {}
        unsuccessful: dict[str, int] = {}
        degraded = set()
        failed = set()
        for app, row in apps_payload["applications"].items():
            p95 = frac(row["response_p95"]) if row["response_p95"] is not None else None
            app_p95[app] = p95
            hops = row.get("hops_mean")
            hops_mean[app] = frac(hops) if hops is not None else None
            unsuccessful[app] = int(row["requests_unsuccessful"])
            if unsuccessful[app] > 0:
                failed.add(app)
            requirement = cfg.latency_requirements.get(app)
            if p95 is not None and requirement is not None and p95 > requirement:
                degraded.add(app)

        node_utilization = {n: frac(u)
                            for n, u in net["node_utilization"].items()}
        candidates = set(net.get("overloaded_candidates", ()))
        for node in node_utilization:
            if node in candidates:
                self._overload_streak[node] = self._overload_streak.get(node, 0) + 1
            else:
                self._overload_streak[node] = 0
        overloaded = frozenset(
            n for n in candidates
            if self._overload_streak.get(n, 0) >= cfg.overload_windows)

        link_utilization = {k: frac(u)
                            for k, u in net["link_utilization"].items()}
        congested = frozenset(net.get("congested_candidates", ()))
        placement_cost = frac(net["cost"]["placement_cost_total"])

        return WindowSnapshot(
            index=index, window=dict(window),
            app_p95=app_p95, degraded=frozenset(degraded),
            unsuccessful=unsuccessful, failed=frozenset(failed),
            hops_mean=hops_mean,
            node_utilization=node_utilization, overloaded=overloaded,
            link_utilization=link_utilization, congested=congested,
            placement_cost=placement_cost,
            users_per_node={n: int(c) for n, c
                            in net["users_per_node"].items()})
