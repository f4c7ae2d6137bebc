"""Windowed metrics over the engine's trace store.

Every operation is a pure function of the traces, transmissions, service log,
and current placement: recomputation always yields identical values. Events
belong to the half-open window containing their end/completion time. All
arithmetic is exact rationals; ratios are unclamped, so a short window that
absorbs carried-over work can legitimately report utilization above 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Mapping, Optional

from .engine import Engine
from .rationals import frac, jsonable


class MetricsError(ValueError):
    """Raised for invalid windows or unknown entities."""


@dataclass(frozen=True)
class Window:
    t_start: Fraction
    t_end: Fraction

    def __post_init__(self):
        if self.t_end <= self.t_start:
            raise MetricsError(f"window requires t_end > t_start, got [{self.t_start}, {self.t_end})")

    def contains(self, t: Optional[Fraction]) -> bool:
        return t is not None and self.t_start <= t < self.t_end

    @property
    def length(self) -> Fraction:
        return self.t_end - self.t_start

    def to_jsonable(self) -> dict:
        return {"t_start": jsonable(self.t_start), "t_end": jsonable(self.t_end)}


def make_window(t_start: Any, t_end: Any) -> Window:
    return Window(frac(t_start), frac(t_end))


def whole_run_window(engine: Engine) -> Window:
    """Everything recorded so far: record end times are strictly below the
    clock, so [0, clock) covers the full run; a fresh engine gets [0, 1)."""
    end = engine.clock if engine.clock > 0 else Fraction(1)
    return Window(Fraction(0), end)


def nearest_rank(samples: list[Fraction], q: Fraction) -> Fraction:
    """Nearest-rank percentile: the ceil(q*n)-th smallest sample, 1-based.
    Callers guarantee a nonempty sample."""
    if not samples:
        raise MetricsError("percentile of an empty sample")
    ordered = sorted(samples)
    rank = math.ceil(q * len(ordered))
    rank = min(max(rank, 1), len(ordered))
    return ordered[rank - 1]


def _mean(values: list[Fraction]) -> Optional[Fraction]:
    if not values:
        return None
    return sum(values, Fraction(0)) / len(values)


def _completed_in(engine: Engine, app: str, window: Window):
    return [t for t in engine.traces
            if t.app == app and t.succeeded and window.contains(t.completion)]


def requests_total(engine: Engine, app: str, window: Window) -> int:
    """Emissions in the window, whether or not they ever finished."""
    count = sum(1 for t in engine.traces
                if t.app == app and window.contains(t.emit_time))
    count += sum(1 for r in engine._inflight.values()
                 if r.app.name == app and window.contains(r.emit_time))
    return count


def requests_successful(engine: Engine, app: str, window: Window) -> int:
    return len(_completed_in(engine, app, window))


def unsuccessful_requests(engine: Engine, app: str, window: Window) -> int:
    return max(requests_total(engine, app, window)
               - requests_successful(engine, app, window), 0)


def response_p95(engine: Engine, app: str, window: Window) -> Optional[Fraction]:
    samples = [t.response_time for t in _completed_in(engine, app, window)]
    if not samples:
        return None
    return nearest_rank(samples, Fraction(95, 100))


def node_utilization(engine: Engine, node: str, window: Window) -> Fraction:
    busy = sum((s.end - s.start for s in engine.service_log
                if s.node == node and window.contains(s.end)), Fraction(0))
    return busy / window.length


def _edge_bandwidth(engine: Engine, link: str) -> Fraction:
    u, _, v = link.partition("|")
    edge = engine.topology.adjacency.get(u, {}).get(v)
    if edge is not None:
        return edge.bandwidth
    spec = engine.topology.link_by_key.get(link)
    if spec is not None:
        return spec.bandwidth
    raise MetricsError(f"unknown link {link!r}")


def link_utilization(engine: Engine, link: str, window: Window) -> Fraction:
    moved = sum((t.size for t in engine.transmissions
                 if t.link == link and window.contains(t.end)), Fraction(0))
    return (moved / window.length) / _edge_bandwidth(engine, link)


def placement_cost(engine: Engine, app: Optional[str] = None) -> Fraction:
    total = Fraction(0)
    for d in engine.active_deployments():
        if app is not None and d.app != app:
            continue
        total += engine.topology.nodes[d.node].cost
    return total


def egress_cost(engine: Engine, window: Window,
                rates: Mapping[str, Mapping[str, Any]] = ()) -> dict[tuple[str, str], Fraction]:
    """Cost of traffic crossing region boundaries in the window, per directed
    (source region, destination region) pair; unknown pairs rate 0."""
    costs: dict[tuple[str, str], Fraction] = {}
    rates = rates or {}
    for t in engine.transmissions:
        if not window.contains(t.end):
            continue
        src_region = engine.topology.region_of_node(t.src)
        dst_region = engine.topology.region_of_node(t.dst)
        if src_region == dst_region:
            continue
        rate = frac(rates.get(src_region, {}).get(dst_region, 0))
        pair = (src_region, dst_region)
        costs[pair] = costs.get(pair, Fraction(0)) + t.size * rate
    return costs


def ingress_cost(engine: Engine, window: Window,
                 rates: Mapping[str, Mapping[str, Any]] = ()) -> dict[tuple[str, str], Fraction]:
    """Mirror of egress_cost billed against the receiving region: the same
    boundary-crossing traffic priced by rates[dst][src]."""
    costs: dict[tuple[str, str], Fraction] = {}
    rates = rates or {}
    for t in engine.transmissions:
        if not window.contains(t.end):
            continue
        src_region = engine.topology.region_of_node(t.src)
        dst_region = engine.topology.region_of_node(t.dst)
        if src_region == dst_region:
            continue
        rate = frac(rates.get(dst_region, {}).get(src_region, 0))
        pair = (dst_region, src_region)
        costs[pair] = costs.get(pair, Fraction(0)) + t.size * rate
    return costs


def app_metrics(engine: Engine, app: str, window: Window) -> dict:
    """Full per-application summary; means cover successful requests
    completing in the window, so the decomposition means satisfy
    network + processing + waiting = response exactly."""
    if app not in engine.apps:
        raise MetricsError(f"unknown application {app!r}")
    completed = _completed_in(engine, app, window)
    responses = [t.response_time for t in completed]
    total = requests_total(engine, app, window)
    successful = len(completed)
    summary = {
        "app": app,
        "window": window.to_jsonable(),
        "requests_total": total,
        "requests_successful": successful,
        "requests_unsuccessful": max(total - successful, 0),
        "response_mean": _mean(responses),
        "response_p50": nearest_rank(responses, Fraction(1, 2)) if responses else None,
        "response_p95": nearest_rank(responses, Fraction(95, 100)) if responses else None,
        "response_max": max(responses) if responses else None,
        "network_mean": _mean([t.network_time for t in completed]),
        "processing_mean": _mean([t.processing_time for t in completed]),
        "waiting_mean": _mean([t.waiting_time for t in completed]),
        "hops_mean": _mean([Fraction(t.hop_count) for t in completed]),
        "distance_mean": _mean([t.distance for t in completed]),
    }
    return summary


def network_metrics(engine: Engine, window: Window,
                    node_threshold: Any = None,
                    link_threshold: Any = None) -> dict:
    """Infrastructure view: per-node and per-cluster utilization, user
    spread, per-link utilization, and threshold-exceeding candidates."""
    nodes = {nid: node_utilization(engine, nid, window)
             for nid in engine.topology.node_ids()}
    clusters = {}
    for cluster in engine.topology.clusters:
        member_utils = [nodes[nid] for nid in engine.topology.node_ids()
                        if engine.topology.cluster_of[nid] == cluster.name]
        clusters[cluster.name] = (sum(member_utils, Fraction(0)) / len(member_utils)
                                  if member_utils else Fraction(0))
    links = {key: link_utilization(engine, key, window)
             for key in sorted(engine.topology.link_by_key)}
    # Intra-cluster edges only show up once they carried traffic.
    seen_intra = set()
    for t in engine.transmissions:
        if t.link not in links and t.link not in seen_intra and window.contains(t.end):
            seen_intra.add(t.link)
    for key in sorted(seen_intra):
        links[key] = link_utilization(engine, key, window)

    result = {
        "window": window.to_jsonable(),
        "node_utilization": nodes,
        "cluster_utilization": clusters,
        "users_per_node": engine.user_distribution(),
        "link_utilization": links,
    }
    if node_threshold is not None:
        threshold = frac(node_threshold)
        result["overloaded_candidates"] = sorted(
            nid for nid, u in nodes.items() if u > threshold)
    if link_threshold is not None:
        threshold = frac(link_threshold)
        result["congested_candidates"] = sorted(
            key for key, u in links.items() if u > threshold)
    return result


def cost_metrics(engine: Engine, window: Window,
                 rates: Mapping[str, Mapping[str, Any]] = ()) -> dict:
    per_app = {name: placement_cost(engine, name) for name in sorted(engine.apps)}
    egress = egress_cost(engine, window, rates)
    return {
        "window": window.to_jsonable(),
        "placement_cost_per_app": per_app,
        "placement_cost_total": placement_cost(engine),
        "egress_cost": {f"{src}->{dst}": value
                        for (src, dst), value in sorted(egress.items())},
    }
