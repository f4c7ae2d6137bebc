"""Builds topology, application, user, and process documents for experiments.

Two ready-made profiles exist: the full-size profile (3 CDC / 10 EDC / 27
MEC clusters, 214 nodes, horizon 5000) and a reduced desk profile (1/2/4
clusters, horizon 1000) that keeps every structural property while running
in seconds. Per-VNF service demands and message sizes are configuration
defaults of this harness, chosen so the nominal workload sits just below
the node-overload threshold until the hotspot concentrates demand.
"""

from __future__ import annotations

import copy
import json
import random
from pathlib import Path
from typing import Any, Mapping, Optional

from ..rationals import dumps_canonical, jsonable

APP_PERCEPTION = "perception-pipeline"
APP_COORDINATION = "coordination-pipeline"
APP_TELEMETRY = "telemetry-monitoring"

# cost units per node, by cluster role
NODE_COSTS = {"cdc": 0.01, "edc": 0.06, "mec": 0.30}

# harness defaults, not sourced values: demands keep a shared deployment
# near 3% busy under nominal load (period 30), message size 2 keeps
# serialization well below propagation on every link profile below
DEFAULT_DEMANDS = {
    APP_PERCEPTION: [0.4, 0.3, 0.2],
    APP_COORDINATION: [0.3, 0.2],
    APP_TELEMETRY: [0.3],
}
DEFAULT_MESSAGE_SIZE = 2
DEFAULT_VNF_FOOTPRINT = {"cpu": 1}
DEFAULT_NODE_CAPACITY = {"cpu": 1000}

LATENCY_REQUIREMENTS = {
    APP_PERCEPTION: 120,
    APP_COORDINATION: 75,
    APP_TELEMETRY: 50,
}

LINK_PROFILES = {
    # (distance_km, target_latency, bandwidth)
    ("mec", "edc"): (10, 2, 100),
    ("edc", "cdc"): (100, 6, 200),
    ("cdc", "cdc"): (1000, 10, 1000),
}


class ScenarioError(ValueError):
    """Raised for inconsistent profile parameters."""


def application_catalog(demands: Optional[Mapping[str, list]] = None,
                        message_size: Any = DEFAULT_MESSAGE_SIZE) -> list[dict]:
    """The three-application workload: a 3-VNF chain with 4 messages and a
    120-unit latency requirement, a 2-VNF chain (3 messages, 75), and a
    single-VNF chain (2 messages, 50). Every chain carries a response
    message back to the user."""
    demands = dict(DEFAULT_DEMANDS, **(demands or {}))
    catalog = []
    for name in (APP_PERCEPTION, APP_COORDINATION, APP_TELEMETRY):
        stage_demands = demands[name]
        vnfs = [{"name": f"{name}-s{i + 1}",
                 "service_demand": stage_demands[i],
                 "footprint": dict(DEFAULT_VNF_FOOTPRINT)}
                for i in range(len(stage_demands))]
        hops = ["user"] + [v["name"] for v in vnfs] + ["user"]
        messages = [{"name": f"m{i}", "source": src, "target": dst,
                     "size": message_size}
                    for i, (src, dst) in enumerate(zip(hops, hops[1:]))]
        catalog.append({"name": name,
                        "latency_requirement": LATENCY_REQUIREMENTS[name],
                        "vnfs": vnfs, "messages": messages})
    return catalog


def desk_profile() -> dict:
    return {
        "name": "desk",
        "cluster_counts": {"cdc": 1, "edc": 2, "mec": 4},
        "workers_per_cluster": {"cdc": 7, "edc": 6, "mec": 7},
        "total_nodes": None,
        "horizon": 1000,
        "window_length": 100,
        "users_per_app": 2,
        "request_period": 30,
        "hotspot": {"times": [200, 360, 520], "count": 60,
                    "remove_fraction": 0.4},
        "node_capacity": dict(DEFAULT_NODE_CAPACITY),
    }


def full_profile() -> dict:
    return {
        "name": "full",
        "cluster_counts": {"cdc": 3, "edc": 10, "mec": 27},
        "workers_per_cluster": None,  # drawn from the seed, total fixed below
        "total_nodes": 214,
        "horizon": 5000,
        "window_length": 100,
        "users_per_app": 6,
        "request_period": 30,
        "hotspot": {"times": [1000, 1800, 2600], "count": 60,
                    "remove_fraction": 0.4},
        "node_capacity": dict(DEFAULT_NODE_CAPACITY),
    }


def _cluster_names(counts: Mapping[str, int]) -> list[tuple[str, str]]:
    names = []
    for role in ("cdc", "edc", "mec"):
        for i in range(counts.get(role, 0)):
            names.append((f"{role}-{i}", role))
    return names


def _node_plan(profile: Mapping[str, Any], rng: random.Random) -> dict[str, int]:
    """Worker count per cluster. Fixed per-role counts when the profile
    gives them; otherwise drawn from the seed so the grand total (control
    planes included) matches total_nodes exactly."""
    counts = profile["cluster_counts"]
    clusters = _cluster_names(counts)
    fixed = profile.get("workers_per_cluster")
    if fixed is not None:
        plan = {name: fixed[role] for name, role in clusters}
        total = profile.get("total_nodes")
        if total is not None and total != len(clusters) + sum(plan.values()):
            raise ScenarioError(
                f"profile asks for {total} nodes but the per-cluster plan yields "
                f"{len(clusters) + sum(plan.values())}")
        return plan
    total = profile["total_nodes"]
    minimum = 2 * len(clusters)  # one control plane + one worker each
    if total < minimum:
        raise ScenarioError(f"{total} nodes cannot cover {len(clusters)} clusters")
    plan = {name: 1 for name, _ in clusters}
    spare = total - minimum
    names = [name for name, _ in clusters]
    for _ in range(spare):
        plan[rng.choice(names)] += 1
    return plan


def build_topology_documents(profile: Mapping[str, Any],
                             rng: random.Random) -> dict:
    counts = profile["cluster_counts"]
    clusters = _cluster_names(counts)
    plan = _node_plan(profile, rng)
    capacity = profile.get("node_capacity", DEFAULT_NODE_CAPACITY)

    n_regions = max(counts.get("cdc", 0), 1)
    regions = [f"region-{chr(ord('a') + i)}" for i in range(n_regions)]
    region_of: dict[str, str] = {}
    for i, (name, role) in enumerate(c for c in clusters if c[1] == "cdc"):
        region_of[name] = regions[i % n_regions]
    non_cdc = [c for c in clusters if c[1] != "cdc"]
    for i, (name, role) in enumerate(non_cdc):
        region_of[name] = regions[i % n_regions]

    cluster_docs = []
    for name, role in clusters:
        nodes = [{"name": f"{name}-cp", "role": "control-plane",
                  "capacity": dict(capacity), "cost": NODE_COSTS[role]}]
        for w in range(plan[name]):
            nodes.append({"name": f"{name}-worker-{w}", "role": "worker",
                          "capacity": dict(capacity), "cost": NODE_COSTS[role]})
        cluster_docs.append({"name": name, "role": role,
                             "region": region_of[name], "nodes": nodes})

    links = []

    def link(a: str, b: str, kind: tuple[str, str]) -> None:
        distance, latency, bandwidth = LINK_PROFILES[kind]
        links.append({"endpoints": [a, b], "distance_km": distance,
                      "target_latency": latency, "bandwidth": bandwidth})

    cdcs = [name for name, role in clusters if role == "cdc"]
    edcs = [name for name, role in clusters if role == "edc"]
    mecs = [name for name, role in clusters if role == "mec"]
    for i, a in enumerate(cdcs):
        for b in cdcs[i + 1:]:
            link(a, b, ("cdc", "cdc"))
    for edc in edcs:
        same_region = [c for c in cdcs if region_of[c] == region_of[edc]]
        target = rng.choice(same_region or cdcs) if cdcs else None
        if target:
            link(edc, target, ("edc", "cdc"))
    for mec in mecs:
        same_region = [e for e in edcs if region_of[e] == region_of[mec]]
        pool = same_region or edcs or cdcs
        if pool:
            target = rng.choice(pool)
            kind = ("mec", "edc") if target in edcs else ("edc", "cdc")
            link(mec, target, kind)
    return {"clusters": cluster_docs, "links": links}


def _mec_workers(topology_doc: Mapping[str, Any]) -> list[str]:
    out = []
    for cluster in topology_doc["clusters"]:
        if cluster.get("role") != "mec":
            continue
        for node in cluster["nodes"]:
            if node["role"] == "worker":
                out.append(node["name"])
    return sorted(out)


def _any_workers(topology_doc: Mapping[str, Any]) -> list[str]:
    out = []
    for cluster in topology_doc["clusters"]:
        for node in cluster["nodes"]:
            if node["role"] == "worker":
                out.append(node["name"])
    return sorted(out)


def build_scenario_documents(profile: Mapping[str, Any], seed: Any) -> dict:
    """Full scenario: topology, the three applications, nominal users on MEC
    workers, and the hotspot process. The hotspot's target node and its
    neighbor are seed-drawn and recorded under "hotspot"."""
    rng = random.Random(f"{seed}/scenario")
    topology = build_topology_documents(profile, rng)
    applications = application_catalog()
    period = profile.get("request_period", 30)
    generation = {"type": "deterministic", "time": period}

    mec_workers = _mec_workers(topology) or _any_workers(topology)
    users = []
    app_names = [a["name"] for a in applications]
    for app in app_names:
        for _ in range(profile.get("users_per_app", 2)):
            users.append({"app_ref": app, "node": rng.choice(mec_workers),
                          "generation": dict(generation)})

    hotspot_cfg = profile.get("hotspot") or {}
    processes = []
    hotspot_meta = None
    if hotspot_cfg:
        node = rng.choice(mec_workers)
        cluster = node.rsplit("-worker-", 1)[0]
        siblings = [w for w in mec_workers
                    if w != node and w.startswith(cluster + "-")]
        neighbor = siblings[0] if siblings else next(
            (w for w in mec_workers if w != node), node)
        hotspot_meta = {"node": node, "neighbor": neighbor}
        processes.append({
            "name": "hotspot",
            "kind": "hotspot_users",
            "enabled": True,
            "distribution": {"type": "deterministic", "time": 1},
            "params": {
                "app_ref": APP_PERCEPTION,
                "node": node,
                "neighbor_node": neighbor,
                "times": list(hotspot_cfg["times"]),
                "count": hotspot_cfg.get("count", 60),
                "remove_fraction": hotspot_cfg.get("remove_fraction", 0.4),
                "generation": dict(generation),
            },
        })

    return {
        "profile": profile.get("name", "custom"),
        "seed": seed,
        "horizon": profile.get("horizon", 1000),
        "window_length": profile.get("window_length", 100),
        "topology": topology,
        "applications": applications,
        "users": users,
        "processes": processes,
        "placements": [],
        "hotspot": hotspot_meta,
    }


def default_documents(clusters: int = 3, nodes_per_cluster: int = 10,
                      seed: Any = 0) -> dict:
    """Small ready-to-run scenario for the one-call creation tool: generic
    clusters, the standard application catalog, one user and one deployed
    chain per application."""
    if clusters < 1 or nodes_per_cluster < 2:
        raise ScenarioError("need at least 1 cluster and 2 nodes per cluster")
    rng = random.Random(f"{seed}/default-scenario")
    cluster_docs = []
    for c in range(clusters):
        name = f"cluster-{c}"
        nodes = [{"name": f"{name}-cp", "role": "control-plane",
                  "capacity": dict(DEFAULT_NODE_CAPACITY), "cost": NODE_COSTS["edc"]}]
        for w in range(nodes_per_cluster - 1):
            nodes.append({"name": f"{name}-worker-{w}", "role": "worker",
                          "capacity": dict(DEFAULT_NODE_CAPACITY),
                          "cost": NODE_COSTS["edc"]})
        cluster_docs.append({"name": name, "role": "edc",
                             "region": "region-a", "nodes": nodes})
    links = []
    for i in range(1, clusters):
        links.append({"endpoints": [f"cluster-0", f"cluster-{i}"],
                      "distance_km": 50, "target_latency": 3, "bandwidth": 100})
    topology = {"clusters": cluster_docs, "links": links}

    applications = application_catalog()
    workers = _any_workers(topology)
    users = []
    placements = []
    for app in applications:
        node = rng.choice(workers)
        users.append({"app_ref": app["name"], "node": node,
                      "generation": {"type": "deterministic", "time": 30}})
        for vnf in app["vnfs"]:
            placements.append({"app": app["name"], "vnf": vnf["name"],
                               "node": rng.choice(workers)})
    return {
        "profile": "default",
        "seed": seed,
        "horizon": 1000,
        "window_length": 100,
        "topology": topology,
        "applications": applications,
        "users": users,
        "processes": [],
        "placements": placements,
        "hotspot": None,
    }


def write_scenario(directory: str | Path, documents: Mapping[str, Any]) -> Path:
    """Persist a scenario as one file per document class plus a manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    parts = {
        "topology.json": documents["topology"],
        "services.json": {"applications": documents["applications"]},
        "users.json": {"users": documents["users"]},
        "processes.json": {"processes": documents["processes"]},
        "placements.json": {"placements": documents.get("placements", [])},
    }
    for filename, body in parts.items():
        (directory / filename).write_text(dumps_canonical(jsonable(body)) + "\n")
    manifest = {k: v for k, v in documents.items()
                if k in ("profile", "seed", "horizon", "window_length", "hotspot")}
    (directory / "scenario.json").write_text(
        dumps_canonical(jsonable(manifest)) + "\n")
    return directory


def read_scenario(directory: str | Path) -> dict:
    directory = Path(directory)
    docs = json.loads((directory / "scenario.json").read_text())
    docs["topology"] = json.loads((directory / "topology.json").read_text())
    docs["applications"] = json.loads(
        (directory / "services.json").read_text())["applications"]
    docs["users"] = json.loads((directory / "users.json").read_text())["users"]
    docs["processes"] = json.loads(
        (directory / "processes.json").read_text())["processes"]
    docs["placements"] = json.loads(
        (directory / "placements.json").read_text())["placements"]
    return docs
