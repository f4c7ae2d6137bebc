"""Shared builders for small, hand-checkable infrastructures and workloads."""
from __future__ import annotations

from fractions import Fraction

import pytest

from edgesim.engine import Engine
from edgesim.rationals import frac
from edgesim.topology import load_topology
from edgesim.workload import load_applications, load_users


def cluster_doc(name: str, region: str = "region-a", workers: int = 1,
                cost: float | str = "0.06", cpu: int = 1000,
                role: str = "edc") -> dict:
    nodes = [{"name": f"{name}-cp", "role": "control-plane",
              "capacity": {"cpu": cpu}, "cost": cost}]
    for i in range(workers):
        nodes.append({"name": f"{name}-worker-{i}", "role": "worker",
                      "capacity": {"cpu": cpu}, "cost": cost})
    return {"name": name, "role": role, "region": region, "nodes": nodes}


def line_topology_doc(latencies=(5, 7), bandwidth=100) -> dict:
    """Three clusters in a line: a - b - c."""
    return {
        "clusters": [cluster_doc("a"), cluster_doc("b"), cluster_doc("c")],
        "links": [
            {"endpoints": ["a", "b"], "distance_km": 10,
             "target_latency": latencies[0], "bandwidth": bandwidth},
            {"endpoints": ["b", "c"], "distance_km": 20,
             "target_latency": latencies[1], "bandwidth": bandwidth},
        ],
    }


def echo_app_doc(name: str = "echo", demand="1", size=10,
                 requirement=100) -> dict:
    """Single-stage request/response application."""
    return {
        "name": name,
        "latency_requirement": requirement,
        "vnfs": [{"name": f"{name}-s1", "service_demand": demand,
                  "footprint": {"cpu": 1}}],
        "messages": [
            {"name": "m0", "source": "user", "target": f"{name}-s1",
             "size": size},
            {"name": "m1", "source": f"{name}-s1", "target": "user",
             "size": size},
        ],
    }


def chain_app_doc(name: str = "chain", stages: int = 3, demand="1",
                  size=10, requirement=200) -> dict:
    vnfs = [{"name": f"{name}-s{i + 1}", "service_demand": demand,
             "footprint": {"cpu": 1}} for i in range(stages)]
    hops = ["user"] + [v["name"] for v in vnfs]
    messages = [{"name": f"m{i}", "source": hops[i], "target": hops[i + 1],
                 "size": size} for i in range(stages)]
    messages.append({"name": f"m{stages}", "source": hops[-1],
                     "target": "user", "size": size})
    return {"name": name, "latency_requirement": requirement,
            "vnfs": vnfs, "messages": messages}


def user_doc(app: str, node: str, period="30") -> dict:
    return {"app_ref": app, "node": node,
            "generation": {"type": "deterministic", "time": period}}


def make_engine(topology_doc=None, app_docs=None, users=(), placements=(),
                seed=0, processes=()) -> Engine:
    topo = load_topology(topology_doc or line_topology_doc())
    apps = load_applications(app_docs if app_docs is not None
                             else [echo_app_doc()])
    user_specs = load_users(list(users))
    return Engine(topo, apps, seed, users=user_specs,
                  processes=list(processes), placements=list(placements))


@pytest.fixture
def line_engine() -> Engine:
    """echo app deployed on c's worker, one user on a's worker."""
    return make_engine(
        users=[user_doc("echo", "a-worker-0")],
        placements=[{"app": "echo", "vnf": "echo-s1", "node": "c-worker-0"}])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    try:
        from tests.test_acceptance import CRITERIA_RESULTS
    except Exception:
        return
    if not CRITERIA_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, elapsed) in CRITERIA_RESULTS.items():
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"{name}: {verdict} ({elapsed:.2f}s)")


def frac_close(a, b, tol="0") -> bool:
    return abs(frac(a) - frac(b)) <= frac(tol)


def as_fraction(value) -> Fraction:
    return frac(value)
