"""Baseline placements: shared random chains with round-robin user
binding, and the per-user greedy policy."""

from __future__ import annotations

import random
from typing import Any, Optional, Sequence

from ..rationals import jsonable


def random_placement(client, sim_id: str, users: Sequence[dict] = (),
                     chains: int = 20, seed: Any = 0) -> dict:
    """Deploy `chains` shared application chains on uniformly drawn up
    nodes (applications taken round-robin), then create the given users
    pinned to their application's chains round-robin."""
    rng = random.Random(f"{seed}/random-placement")
    apps = client.call("list_simulation_deployed_applications",
                       {"simulation_id": sim_id})["applications"]
    app_order = [row["app"] for row in apps]
    topology = client.call("get_simulation_topology",
                           {"simulation_id": sim_id})
    up_nodes = sorted(n for n, info in topology["nodes"].items()
                      if info["up"])
    vnf_chains = {}
    for row in apps:
        vnf_chains[row["app"]] = client.call(
            "list_simulation_application_vnfs",
            {"simulation_id": sim_id, "app": row["app"]})["vnfs"]

    tags_per_app: dict[str, list[str]] = {a: [] for a in app_order}
    deployed = 0
    for index in range(chains):
        app = app_order[index % len(app_order)]
        tag = f"shared-{app}-{index}"
        for vnf in vnf_chains[app]:
            node = rng.choice(up_nodes)
            client.call("deploy_application_vnf",
                        {"simulation_id": sim_id, "app": app,
                         "vnf": vnf["name"], "node": node,
                         "chain_tag": tag})
            deployed += 1
        tags_per_app[app].append(tag)

    user_ids: list[str] = []
    if users:
        seen: dict[str, int] = {}
        pinned = []
        for spec in users:
            app = spec["app_ref"]
            tags = tags_per_app.get(app) or [None]
            position = seen.get(app, 0)
            pinned.append(tags[position % len(tags)])
            seen[app] = position + 1
        created = client.call("create_users",
                              {"simulation_id": sim_id,
                               "users": [jsonable(dict(s)) for s in users],
                               "pinned_tags": pinned})
        user_ids = created["user_ids"]

    return {"simulation_id": sim_id, "chains": chains,
            "deployments": deployed,
            "tags_per_app": {a: list(t) for a, t in tags_per_app.items()},
            "user_ids": user_ids}


def greedy_placement(client, sim_id: str, users: Sequence[dict] = ()) -> dict:
    """Engine-side greedy policy: every user (present and future, hotspot
    included) gets a dedicated chain deployed on its own node."""
    client.call("set_placement_policy",
                {"simulation_id": sim_id, "policy": "greedy"})
    user_ids: list[str] = []
    if users:
        created = client.call("create_users",
                              {"simulation_id": sim_id,
                               "users": [jsonable(dict(s)) for s in users]})
        user_ids = created["user_ids"]
    return {"simulation_id": sim_id, "policy": "greedy",
            "user_ids": user_ids}
