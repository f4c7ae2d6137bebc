"""Placement side of the control loop: strategy selection, destination
scoring, and bounded action generation.

Strategy precedence is total: cost over overload over congestion over
balanced, and a balanced window emits no actions. Action phases follow
the strategy's priority table and share one budget; infeasible actions
are dropped at execution time without refilling the budget.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterator, Mapping, Optional

from ..rationals import frac, jsonable
from .config import AgentConfig
from .monitor import WindowSnapshot

ACTION_KINDS = ("consolidate", "replicate", "move")


def select_strategy(snapshot: WindowSnapshot, config: AgentConfig) -> str:
    if snapshot.placement_cost > config.cost_threshold:
        return "cost"
    if snapshot.overloaded:
        return "overload"
    if snapshot.congested:
        return "congestion"
    return "balanced"


@dataclass(frozen=True)
class AppContext:
    """Everything destination scoring needs about one application:
    per-candidate mean hop distance to its users, the window's node
    utilizations, node costs and regions, and the dominant user region."""

    app: str
    distances: Mapping[str, Fraction]
    utilization: Mapping[str, Fraction]
    node_costs: Mapping[str, Fraction]
    node_regions: Mapping[str, str]
    dominant_region: Optional[str]


def score_node(candidate: str, ctx: AppContext, strategy: str,
               config: AgentConfig) -> Optional[Fraction]:
    """Lower is better; None when the candidate is unreachable from the
    application's users."""
    distance = ctx.distances.get(candidate)
    if distance is None:
        return None
    alpha, beta = config.weights[strategy]
    utilization = ctx.utilization.get(candidate, Fraction(0))
    cost = ctx.node_costs[candidate]
    if ctx.dominant_region is None or \
            ctx.node_regions.get(candidate) == ctx.dominant_region:
        penalty = Fraction(0)
    else:
        penalty = config.region_penalty
    return distance + alpha * utilization + beta * cost + penalty


@dataclass(frozen=True)
class PlacementAction:
    kind: str
    app: str
    vnf: str
    source: Optional[str]
    destination: str
    deployment_id: Optional[str]
    chain_tag: Optional[str]
    justification: str

    def to_jsonable(self) -> dict:
        return {"kind": self.kind, "app": self.app, "vnf": self.vnf,
                "source": self.source, "destination": self.destination,
                "deployment_id": self.deployment_id,
                "chain_tag": self.chain_tag,
                "justification": self.justification}


@dataclass
class WorldView:
    """Tool-observed model of the simulation used for planning: node
    inventory, hop distances, active deployments, chains, and users."""

    nodes: dict[str, dict]                 # name -> region/cost/capacity/used/up
    adjacency: dict[str, list[str]]        # over up nodes only
    deployments: list[dict]                # active deployment views
    app_vnfs: dict[str, list[dict]]        # app -> chain-ordered vnf docs
    app_users: dict[str, list[str]]        # app -> one node entry per user
    app_messages: dict[str, int] = field(default_factory=dict)
    # Load this window's own pending moves push onto their destinations, so
    # four actions planned against one snapshot do not stack on one argmin.
    projected_load: dict[str, Fraction] = field(default_factory=dict)
    _hops: dict[str, dict[str, int]] = field(default_factory=dict)

    @property
    def up_nodes(self) -> list[str]:
        return sorted(n for n, info in self.nodes.items() if info["up"])

    def hops_from(self, src: str) -> dict[str, int]:
        cached = self._hops.get(src)
        if cached is not None:
            return cached
        dist = {src: 0}
        queue = deque([src])
        while queue:
            here = queue.popleft()
            for nxt in self.adjacency.get(here, ()):
                if nxt not in dist:
                    dist[nxt] = dist[here] + 1
                    queue.append(nxt)
        self._hops[src] = dist
        return dist

    def mean_user_distance(self, app: str) -> dict[str, Fraction]:
        """candidate -> mean hops to the app's users; users absent means
        distance 0 everywhere (no proximity signal)."""
        user_nodes = self.app_users.get(app, [])
        if not user_nodes:
            return {n: Fraction(0) for n in self.up_nodes}
        per_user = [self.hops_from(n) for n in user_nodes]
        out: dict[str, Fraction] = {}
        for candidate in self.up_nodes:
            total = Fraction(0)
            reachable = True
            for dist in per_user:
                if candidate not in dist:
                    reachable = False
                    break
                total += dist[candidate]
            if reachable:
                out[candidate] = total / len(user_nodes)
        return out

    def dominant_region(self, app: str) -> Optional[str]:
        votes: dict[str, int] = {}
        for node in self.app_users.get(app, []):
            info = self.nodes.get(node)
            if info:
                votes[info["region"]] = votes.get(info["region"], 0) + 1
        if not votes:
            return None
        best = max(votes.values())
        return min(r for r, v in votes.items() if v == best)

    def region_distance(self, node: str, region: str) -> Optional[int]:
        """Hops from node to the nearest up node of the region."""
        if self.nodes.get(node, {}).get("region") == region:
            return 0
        dist = self.hops_from(node)
        best = None
        for other, info in self.nodes.items():
            if info["region"] == region and info["up"] and other in dist:
                if best is None or dist[other] < best:
                    best = dist[other]
        return best

    def demand_distance(self, app: str, region: str,
                        replica_nodes: list[str]) -> Optional[Fraction]:
        """Mean, over the app's users in the region, of the hop distance
        to the nearest replica. None means no replica is reachable (or
        none exists): infinitely far from the demand."""
        if not replica_nodes:
            return None
        targets = [n for n in self.app_users.get(app, ())
                   if self.nodes.get(n, {}).get("region") == region]
        if not targets:
            spreads = [self.region_distance(n, region)
                       for n in replica_nodes]
            spreads = [s for s in spreads if s is not None]
            return Fraction(min(spreads)) if spreads else None
        total = Fraction(0)
        for target in targets:
            dist = self.hops_from(target)
            best = min((dist[n] for n in replica_nodes if n in dist),
                       default=None)
            if best is None:
                return None
            total += best
        return total / len(targets)

    def per_message_hops(self, app: str,
                         hops_mean: Optional[Fraction]) -> Fraction:
        """The app's measured mean hop count, normalized per chain message
        so it compares against single node-to-node distances."""
        if hops_mean is None:
            return Fraction(0)
        messages = self.app_messages.get(app) or \
            (len(self.app_vnfs.get(app, ())) + 1)
        return hops_mean / max(1, messages)

    def app_context(self, app: str, snapshot: WindowSnapshot) -> AppContext:
        utilization = dict(snapshot.node_utilization)
        for node, extra in self.projected_load.items():
            utilization[node] = utilization.get(node, Fraction(0)) + extra
        return AppContext(
            app=app,
            distances=self.mean_user_distance(app),
            utilization=utilization,
            node_costs={n: info["cost"] for n, info in self.nodes.items()},
            node_regions={n: info["region"] for n, info in self.nodes.items()},
            dominant_region=self.dominant_region(app))

    def project_load(self, node: str, amount: Fraction) -> None:
        self.projected_load[node] = \
            self.projected_load.get(node, Fraction(0)) + amount

    # -- capacity projection while planning --

    def footprint(self, app: str, vnf: str) -> dict[str, Fraction]:
        for doc in self.app_vnfs.get(app, []):
            if doc["name"] == vnf:
                return {r: frac(v) for r, v in doc.get("footprint", {}).items()}
        return {}

    def feasible(self, node: str, footprint: Mapping[str, Fraction]) -> bool:
        info = self.nodes.get(node)
        if info is None or not info["up"]:
            return False
        for res, amount in footprint.items():
            if amount <= 0:
                continue
            capacity = frac(info["capacity"].get(res, 0))
            used = frac(info["used"].get(res, 0))
            if amount > capacity - used:
                return False
        return True

    def commit(self, node: str, footprint: Mapping[str, Fraction]) -> None:
        used = self.nodes[node]["used"]
        for res, amount in footprint.items():
            used[res] = frac(used.get(res, 0)) + amount

    def release(self, node: str, footprint: Mapping[str, Fraction]) -> None:
        used = self.nodes[node]["used"]
        for res, amount in footprint.items():
            used[res] = frac(used.get(res, 0)) - amount


def _best_destination(candidates, ctx: AppContext, strategy: str,
                      config: AgentConfig) -> Optional[str]:
    scored = []
    for node in candidates:
        score = score_node(node, ctx, strategy, config)
        if score is not None:
            scored.append((score, node))
    if not scored:
        return None
    return min(scored)[1]


def _consolidate_actions(snapshot: WindowSnapshot, strategy: str,
                         config: AgentConfig, world: WorldView,
                         consumed: set) -> Iterator[PlacementAction]:
    """Migrate deployments off the most expensive occupied nodes to the
    best-scoring strictly cheaper nodes, stopping once the projected
    placement cost is back within budget."""
    projected = snapshot.placement_cost
    ordered = sorted(
        world.deployments,
        key=lambda d: (-world.nodes[d["node"]]["cost"], d["node"], d["id"]))
    for dep in ordered:
        if projected <= config.cost_threshold:
            return
        if dep["id"] in consumed:
            continue
        source = dep["node"]
        source_cost = world.nodes[source]["cost"]
        ctx = world.app_context(dep["app"], snapshot)
        footprint = world.footprint(dep["app"], dep["vnf"])
        candidates = [n for n in world.up_nodes
                      if n != source and world.nodes[n]["cost"] < source_cost
                      and world.feasible(n, footprint)]
        destination = _best_destination(candidates, ctx, strategy, config)
        if destination is None:
            continue
        consumed.add(dep["id"])
        world.commit(destination, footprint)
        world.release(source, footprint)
        projected -= source_cost - world.nodes[destination]["cost"]
        yield PlacementAction(
            kind="consolidate", app=dep["app"], vnf=dep["vnf"],
            source=source, destination=destination,
            deployment_id=dep["id"], chain_tag=dep.get("chain_tag"),
            justification=(f"placement cost {float(snapshot.placement_cost):.4g} "
                           f"over budget {float(config.cost_threshold):.4g}"))


def _move_actions(snapshot: WindowSnapshot, strategy: str,
                  config: AgentConfig, world: WorldView,
                  consumed: set) -> Iterator[PlacementAction]:
    """Relieve each overloaded node by evicting its single most
    latency-sensitive deployment; most loaded node first."""
    requirement = config.latency_requirements
    overloaded = sorted(snapshot.overloaded,
                        key=lambda n: (-snapshot.node_utilization.get(n, Fraction(0)), n))
    for node in overloaded:
        local = [d for d in world.deployments
                 if d["node"] == node and d["id"] not in consumed]
        local.sort(key=lambda d: (requirement.get(d["app"], Fraction(10 ** 9)),
                                  d["app"], d["id"]))
        if not local:
            continue
        # The eviction carries its per-deployment share of the source's
        # load to wherever it goes.
        share = snapshot.node_utilization.get(node, Fraction(0)) / len(local)
        for dep in local:
            source = dep["node"]
            ctx = world.app_context(dep["app"], snapshot)
            footprint = world.footprint(dep["app"], dep["vnf"])
            candidates = [n for n in world.up_nodes
                          if n != source and n not in snapshot.overloaded
                          and world.feasible(n, footprint)]
            destination = _best_destination(candidates, ctx, strategy, config)
            if destination is None:
                continue
            consumed.add(dep["id"])
            world.commit(destination, footprint)
            world.release(source, footprint)
            world.project_load(destination, share)
            yield PlacementAction(
                kind="move", app=dep["app"], vnf=dep["vnf"],
                source=source, destination=destination,
                deployment_id=dep["id"], chain_tag=dep.get("chain_tag"),
                justification=(f"node {source} utilization "
                               f"{float(snapshot.node_utilization.get(source, 0)):.4g} "
                               f"over {float(config.node_threshold):.4g}"))
            break


def _replicate_actions(snapshot: WindowSnapshot, strategy: str,
                       config: AgentConfig, world: WorldView,
                       consumed: set) -> Iterator[PlacementAction]:
    """Add replicas for degraded or failing applications: a chain stage is
    missing near the demand when its nearest replica sits more hops from
    the dominant region's users than the app's per-message mean; the
    worst-off stage is replicated first."""
    affected = sorted(snapshot.degraded | snapshot.failed)
    plans: list[deque] = []
    for app in affected:
        region = world.dominant_region(app)
        if region is None:
            continue
        threshold = world.per_message_hops(app, snapshot.hops_mean.get(app))
        stages = []
        for position, doc in enumerate(world.app_vnfs.get(app, [])):
            vnf = doc["name"]
            replica_nodes = [d["node"] for d in world.deployments
                             if d["app"] == app and d["vnf"] == vnf]
            proximity = world.demand_distance(app, region, replica_nodes)
            if proximity is None or proximity > threshold:
                rank = (0, 0, position) if proximity is None else \
                    (1, -proximity, position)
                stages.append((rank, app, vnf))
        stages.sort()
        if stages:
            plans.append(deque(stages))
    while plans:
        next_round = []
        for plan in plans:
            rank, app, vnf = plan.popleft()
            ctx = world.app_context(app, snapshot)
            footprint = world.footprint(app, vnf)
            hosts = {d["node"] for d in world.deployments
                     if d["app"] == app and d["vnf"] == vnf}
            candidates = [n for n in world.up_nodes
                          if n not in hosts and world.feasible(n, footprint)]
            destination = _best_destination(candidates, ctx, strategy, config)
            if destination is not None:
                world.commit(destination, footprint)
                # Placeholder keeps later phases aware of the pending copy;
                # consumed so they never try to act on it.
                planned_id = f"planned-{app}-{vnf}-{destination}"
                consumed.add(planned_id)
                world.deployments.append({"id": planned_id,
                                          "app": app, "vnf": vnf,
                                          "node": destination,
                                          "chain_tag": None})
                yield PlacementAction(
                    kind="replicate", app=app, vnf=vnf,
                    source=None, destination=destination,
                    deployment_id=None, chain_tag=None,
                    justification=(f"{app} degraded/failing; stage {vnf} "
                                   f"farthest from dominant region"))
            if plan:
                next_round.append(plan)
        plans = next_round


def generate_actions(snapshot: WindowSnapshot, strategy: str,
                     config: AgentConfig, world: WorldView,
                     ) -> list[PlacementAction]:
    """At most `budget` actions in the strategy's priority order."""
    if strategy == "balanced":
        return []
    consumed: set[str] = set()
    over_cost = snapshot.placement_cost > config.cost_threshold
    # Replication serves both SLA-degraded and failing applications.
    needs_replicas = bool(snapshot.degraded or snapshot.failed)
    overloaded = bool(snapshot.overloaded)

    def consolidates():
        return _consolidate_actions(snapshot, strategy, config, world, consumed)

    def replicates():
        return _replicate_actions(snapshot, strategy, config, world, consumed)

    def moves():
        return _move_actions(snapshot, strategy, config, world, consumed)

    nothing = iter(())
    if strategy == "cost":
        phases = [consolidates(),
                  replicates() if needs_replicas else nothing,
                  moves() if overloaded else nothing]
    elif strategy == "overload":
        phases = [moves(),
                  replicates() if needs_replicas else nothing,
                  consolidates() if over_cost else nothing]
    elif strategy == "congestion":
        phases = [replicates(),
                  moves() if overloaded else nothing,
                  consolidates() if over_cost else nothing]
    else:
        raise ValueError(f"unknown strategy {strategy!r}")

    actions: list[PlacementAction] = []
    for phase in phases:
        for action in phase:
            actions.append(action)
            if len(actions) >= config.budget:
                return actions
    return actions


class PlacementAgent:
    """Plans and executes placement actions through the tool surface."""

    def __init__(self, client, config: AgentConfig):
        self.client = client
        self.config = config
        self.dropped: list[dict] = []

    def observe(self, sim_id: str, window_index: Optional[int] = None,
                ) -> WorldView:
        call = self.client.call
        topo = call("get_simulation_topology",
                    {"simulation_id": sim_id}, window_index=window_index)
        placements = call("list_simulation_node_placements",
                          {"simulation_id": sim_id},
                          window_index=window_index)["placements"]
        users = call("list_simulation_users", {"simulation_id": sim_id},
                     window_index=window_index)["users"]
        apps = call("list_simulation_deployed_applications",
                    {"simulation_id": sim_id},
                    window_index=window_index)["applications"]

        nodes = {}
        for name, info in topo["nodes"].items():
            nodes[name] = {
                "region": info["region"], "cluster": info["cluster"],
                "role": info["role"], "up": bool(info["up"]),
                "cost": frac(info["cost"]),
                "capacity": dict(info["capacity"]),
                "used": dict(info["used"]),
            }
        adjacency: dict[str, list[str]] = {}
        for edge in topo["edges"]:
            a, b = edge["a"], edge["b"]
            if nodes.get(a, {}).get("up") and nodes.get(b, {}).get("up"):
                adjacency.setdefault(a, []).append(b)
                adjacency.setdefault(b, []).append(a)

        deployments = [dict(view) for views in placements.values()
                       for view in views]
        app_vnfs: dict[str, list[dict]] = {}
        app_messages: dict[str, int] = {}
        for row in apps:
            vnfs = call("list_simulation_application_vnfs",
                        {"simulation_id": sim_id, "app": row["app"]},
                        window_index=window_index)["vnfs"]
            app_vnfs[row["app"]] = vnfs
            if "message_count" in row:
                app_messages[row["app"]] = int(row["message_count"])
        app_users: dict[str, list[str]] = {}
        for user in users:
            if user.get("active", True):
                app_users.setdefault(user["app_ref"], []).append(user["node"])

        return WorldView(nodes=nodes, adjacency=adjacency,
                         deployments=deployments, app_vnfs=app_vnfs,
                         app_users=app_users, app_messages=app_messages)

    def plan(self, sim_id: str, snapshot: WindowSnapshot, strategy: str,
             ) -> list[PlacementAction]:
        if strategy == "balanced":
            return []
        world = self.observe(sim_id, window_index=snapshot.index)
        return generate_actions(snapshot, strategy, self.config, world)

    def execute(self, sim_id: str, actions: list[PlacementAction],
                window_index: Optional[int] = None) -> list[dict]:
        """Run each action through the mutation tools; failures are dropped
        and logged, never retried against the budget."""
        outcomes = []
        for action in actions:
            outcome = {"action": action.to_jsonable(), "ok": True}
            try:
                if action.kind == "move":
                    self.client.call(
                        "move_application_vnf",
                        {"simulation_id": sim_id,
                         "deployment_id": action.deployment_id,
                         "node": action.destination},
                        window_index=window_index)
                elif action.kind == "replicate":
                    self.client.call(
                        "replicate_application_vnf",
                        {"simulation_id": sim_id, "app": action.app,
                         "vnf": action.vnf, "node": action.destination},
                        window_index=window_index)
                elif action.kind == "consolidate":
                    args = {"simulation_id": sim_id, "app": action.app,
                            "vnf": action.vnf, "node": action.destination}
                    if action.chain_tag is not None:
                        args["chain_tag"] = action.chain_tag
                    self.client.call("replicate_application_vnf", args,
                                     window_index=window_index)
                    self.client.call(
                        "remove_application_vnf",
                        {"simulation_id": sim_id,
                         "deployment_id": action.deployment_id},
                        window_index=window_index)
                else:
                    raise ValueError(f"unknown action kind {action.kind!r}")
            except Exception as exc:
                outcome = {"action": action.to_jsonable(), "ok": False,
                           "error": str(exc)}
                self.dropped.append(outcome)
            outcomes.append(outcome)
        return outcomes
