"""Simulation-as-a-service: a registry of managed simulations.

Each simulation moves through created -> initialized -> running <-> paused,
with stopped and failed as terminal states. Execution windows run on a
worker thread, chunked by `step` so pause requests take effect at the next
chunk boundary. State-changing operations are accepted only while the
simulation is not running; reads of entity lists and metrics are likewise
gated to non-running states so they always observe a settled snapshot
(get_state and list_simulations stay available for polling).
"""

from __future__ import annotations

import random
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Mapping, Optional

from . import metrics as metrics_mod
from .engine import (CapacityError, Engine, EngineError, UnknownEntityError)
from .rationals import frac, jsonable
from .topology import TopologyError, load_topology
from .workload import (Application, ProcessSpec, UserSpec, WorkloadError,
                       load_applications, load_processes, load_users)

STATES = ("created", "initialized", "running", "paused", "stopped", "failed")

LEGAL_TRANSITIONS = {
    "created": {"initialized", "stopped", "failed"},
    "initialized": {"running", "stopped", "failed"},
    "running": {"paused", "stopped", "failed"},
    "paused": {"running", "stopped", "failed"},
    "stopped": set(),
    "failed": set(),
}

ACTIONABLE_STATES = ("created", "initialized", "paused")


class ServiceError(Exception):
    code = "internal"


class NotFoundError(ServiceError):
    code = "not_found"


class InvalidStateError(ServiceError):
    code = "invalid_state"


class InvalidArgumentError(ServiceError):
    code = "invalid_argument"


class CapacityLimitError(ServiceError):
    code = "capacity"


def _translate(exc: Exception) -> ServiceError:
    if isinstance(exc, ServiceError):
        return exc
    if isinstance(exc, UnknownEntityError):
        return NotFoundError(str(exc))
    if isinstance(exc, CapacityError):
        return CapacityLimitError(str(exc))
    if isinstance(exc, (EngineError, TopologyError, WorkloadError,
                        metrics_mod.MetricsError, ValueError, KeyError, TypeError)):
        return InvalidArgumentError(str(exc))
    return ServiceError(f"{type(exc).__name__}: {exc}")


@dataclass
class SimulationRecord:
    id: str
    name: str
    scenario: dict
    state: str = "created"
    engine: Optional[Engine] = None
    lineage: Optional[dict] = None
    error: Optional[str] = None
    remaining: Fraction = Fraction(0)
    step: Fraction = Fraction(1)
    pending_start: Optional[Fraction] = None
    pause_requested: bool = False
    stop_requested: bool = False
    thread: Optional[threading.Thread] = None
    cond: threading.Condition = field(default_factory=threading.Condition)
    state_history: list = field(default_factory=lambda: ["created"])


class SimulationService:
    """Thread-safe registry; per-simulation operations serialize on the
    record's condition variable."""

    def __init__(self, seed: Any = 0):
        self.seed = seed
        self._registry_lock = threading.RLock()
        self._records: dict[str, SimulationRecord] = {}
        self._id_rng = random.Random(f"{seed}/simulation-ids")
        self.forks: list[dict] = []

    # ---- registry ----------------------------------------------------------

    def _new_id(self) -> str:
        while True:
            sid = f"sim-{self._id_rng.getrandbits(32):08x}"
            if sid not in self._records:
                return sid

    def _record(self, sim_id: str) -> SimulationRecord:
        with self._registry_lock:
            record = self._records.get(sim_id)
        if record is None:
            raise NotFoundError(f"unknown simulation {sim_id!r}")
        return record

    def _transition(self, record: SimulationRecord, new_state: str) -> None:
        # Callers hold record.cond.
        if new_state not in LEGAL_TRANSITIONS[record.state]:
            raise InvalidStateError(
                f"illegal transition {record.state} -> {new_state} for {record.id}")
        record.state = new_state
        record.state_history.append(new_state)
        record.cond.notify_all()

    def create_simulation(self, scenario: Mapping[str, Any],
                          name: Optional[str] = None) -> str:
        """Validate the scenario documents and register a `created` record.
        Schema errors surface before anything is registered."""
        if not isinstance(scenario, Mapping):
            raise InvalidArgumentError("scenario must be an object")
        try:
            parsed = self._parse_scenario(dict(scenario))
        except Exception as exc:
            raise _translate(exc) from None
        with self._registry_lock:
            sid = self._new_id()
            record = SimulationRecord(id=sid, name=name or sid, scenario=parsed)
            self._records[sid] = record
        return sid

    def _parse_scenario(self, scenario: dict) -> dict:
        topology_doc = scenario.get("topology")
        if topology_doc is None:
            raise InvalidArgumentError("scenario requires a 'topology' document")
        topology = load_topology(
            topology_doc,
            intra_latency=scenario.get("intra_latency", 1),
            intra_bandwidth=scenario.get("intra_bandwidth"))
        services_doc = scenario.get("applications", scenario.get("services", []))
        applications = load_applications(services_doc) if services_doc else []
        users = load_users(scenario.get("users", []))
        processes = load_processes(scenario.get("processes", []))
        placements = scenario.get("placements", [])
        if not isinstance(placements, list):
            raise InvalidArgumentError("'placements' must be a list")
        for p in placements:
            if not isinstance(p, Mapping) or not {"app", "vnf", "node"} <= set(p):
                raise InvalidArgumentError(
                    "each placement needs 'app', 'vnf', and 'node'")
        return {
            "topology": topology,
            "applications": applications,
            "users": users,
            "processes": processes,
            "placements": list(placements),
            "seed": scenario.get("seed", self.seed),
            "placement_policy": scenario.get("placement_policy"),
        }

    def _ensure_engine(self, record: SimulationRecord) -> Engine:
        # Callers hold record.cond.
        if record.engine is None:
            s = record.scenario
            try:
                record.engine = Engine(
                    topology=s["topology"], applications=s["applications"],
                    seed=s["seed"], users=s["users"], processes=s["processes"],
                    placements=s["placements"],
                    placement_policy=s.get("placement_policy"))
            except Exception as exc:
                record.error = f"{type(exc).__name__}: {exc}"
                self._transition(record, "failed")
                raise _translate(exc) from None
        return record.engine

    def initialize(self, sim_id: str) -> dict:
        record = self._record(sim_id)
        with record.cond:
            if record.state != "created":
                raise InvalidStateError(
                    f"cannot initialize {sim_id} in state {record.state}")
            self._ensure_engine(record)
            self._transition(record, "initialized")
        return self.get_state(sim_id)

    # ---- execution ----------------------------------------------------------

    def run_for(self, sim_id: str, duration: Any, step: Any = None) -> dict:
        """Schedule one execution window. A `created` simulation is
        initialized on the way, so the create -> run -> wait -> metrics
        sequence works without an explicit initialize call."""
        duration = frac(duration)
        if duration <= 0:
            raise InvalidArgumentError("duration must be > 0")
        step_val = frac(step) if step is not None else duration / 10
        if step_val <= 0:
            raise InvalidArgumentError("step must be > 0")
        record = self._record(sim_id)
        with record.cond:
            if record.state == "created":
                self._ensure_engine(record)
                self._transition(record, "initialized")
            if record.state not in ("initialized", "paused"):
                raise InvalidStateError(
                    f"cannot run {sim_id} in state {record.state}")
            engine = self._ensure_engine(record)
            record.remaining = duration
            record.step = step_val
            record.pending_start = None
            self._transition(record, "running")
            record.thread = threading.Thread(
                target=self._window_worker, args=(record,), daemon=True)
            record.thread.start()
            target = engine.clock + duration
        return {"simulation_id": sim_id, "state": "running",
                "until": jsonable(target), "step": jsonable(step_val)}

    def schedule_for(self, sim_id: str, start: Any, duration: Any,
                     step: Any = None) -> dict:
        """Run the window [start, start+duration); the engine first advances
        to `start` executing whatever is queued on the way."""
        start = frac(start)
        duration = frac(duration)
        if duration <= 0:
            raise InvalidArgumentError("duration must be > 0")
        record = self._record(sim_id)
        with record.cond:
            engine_clock = record.engine.clock if record.engine else Fraction(0)
            if start < engine_clock:
                raise InvalidArgumentError(
                    f"cannot schedule in the past: clock is {engine_clock}, start {start}")
        lead = start - engine_clock
        ack = self.run_for(sim_id, lead + duration, step)
        with record.cond:
            record.pending_start = start
        ack["scheduled_start"] = jsonable(start)
        return ack

    def _window_worker(self, record: SimulationRecord) -> None:
        engine = record.engine
        try:
            while True:
                with record.cond:
                    if record.stop_requested:
                        record.stop_requested = False
                        record.remaining = Fraction(0)
                        self._transition(record, "stopped")
                        return
                    if record.pause_requested:
                        record.pause_requested = False
                        self._transition(record, "paused")
                        return
                    if record.remaining <= 0:
                        self._transition(record, "paused")
                        return
                    chunk = min(record.step, record.remaining)
                engine.run_until(engine.clock + chunk)
                with record.cond:
                    record.remaining -= chunk
        except Exception as exc:
            with record.cond:
                record.error = f"{type(exc).__name__}: {exc}"
                if record.state != "failed":
                    self._transition(record, "failed")

    def pause(self, sim_id: str) -> dict:
        record = self._record(sim_id)
        with record.cond:
            if record.state != "running":
                raise InvalidStateError(
                    f"cannot pause {sim_id} in state {record.state}")
            record.pause_requested = True
        return {"simulation_id": sim_id, "state": "running",
                "note": "pausing at the next step boundary"}

    def resume(self, sim_id: str) -> dict:
        record = self._record(sim_id)
        with record.cond:
            if record.state != "paused":
                raise InvalidStateError(
                    f"cannot resume {sim_id} in state {record.state}")
            if record.remaining <= 0:
                raise InvalidStateError(
                    f"{sim_id} has no remaining scheduled window to resume")
            self._transition(record, "running")
            record.thread = threading.Thread(
                target=self._window_worker, args=(record,), daemon=True)
            record.thread.start()
        return {"simulation_id": sim_id, "state": "running",
                "remaining": jsonable(record.remaining)}

    def wait_until_idle(self, sim_id: str, timeout: Any = None) -> dict:
        record = self._record(sim_id)
        timeout_s = float(timeout) if timeout is not None else None
        with record.cond:
            finished = record.cond.wait_for(lambda: record.state != "running",
                                            timeout=timeout_s)
            state = record.state
        clock = record.engine.clock if record.engine else Fraction(0)
        return {"simulation_id": sim_id, "state": state,
                "timed_out": not finished, "clock": jsonable(clock)}

    def stop(self, sim_id: str) -> dict:
        record = self._record(sim_id)
        with record.cond:
            if record.state in ("stopped", "failed"):
                raise InvalidStateError(f"{sim_id} is already {record.state}")
            if record.state == "running":
                record.stop_requested = True
            else:
                self._transition(record, "stopped")
        if record.thread is not None and record.thread.is_alive():
            record.thread.join()
        return {"simulation_id": sim_id, "state": record.state}

    def destroy(self, sim_id: str) -> dict:
        record = self._record(sim_id)
        with record.cond:
            if record.state == "running":
                record.stop_requested = True
        if record.thread is not None and record.thread.is_alive():
            record.thread.join()
        with self._registry_lock:
            self._records.pop(sim_id, None)
        return {"simulation_id": sim_id, "destroyed": True}

    def fork(self, sim_id: str, name: Optional[str] = None,
             fresh_seed: Any = None) -> str:
        record = self._record(sim_id)
        with record.cond:
            if record.state not in ("initialized", "paused"):
                raise InvalidStateError(
                    f"cannot fork {sim_id} in state {record.state}; pause it first")
            engine = self._ensure_engine(record)
            child_engine = engine.fork_state()
            if fresh_seed is not None:
                child_engine.reseed(fresh_seed)
            fork_clock = engine.clock
            parent_state = record.state
        with self._registry_lock:
            child_id = self._new_id()
            child = SimulationRecord(
                id=child_id, name=name or f"{record.name}-fork",
                scenario=record.scenario, engine=child_engine,
                lineage={"parent": sim_id, "fork_clock": jsonable(fork_clock),
                         "fresh_seed": fresh_seed})
            child.state = parent_state
            child.state_history = ["created", "initialized"]
            if parent_state == "paused":
                child.state_history.append("paused")
            self._records[child_id] = child
        self.forks.append({"child": child_id, "parent": sim_id,
                           "fork_clock": jsonable(fork_clock)})
        return child_id

    # ---- gated helpers -------------------------------------------------------

    def _settled_engine(self, sim_id: str) -> Engine:
        """Engine of a non-running simulation, for reads over a stable
        snapshot."""
        record = self._record(sim_id)
        with record.cond:
            if record.state == "running":
                raise InvalidStateError(
                    f"{sim_id} is running; pause or wait before reading detailed state")
            return self._ensure_engine(record)

    def _mutable_engine(self, sim_id: str) -> Engine:
        record = self._record(sim_id)
        with record.cond:
            if record.state not in ACTIONABLE_STATES:
                raise InvalidStateError(
                    f"mutations require one of {ACTIONABLE_STATES}, "
                    f"but {sim_id} is {record.state}")
            return self._ensure_engine(record)

    def _apply(self, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except Exception as exc:
            raise _translate(exc) from None

    # ---- introspection ---------------------------------------------------------

    def get_state(self, sim_id: str) -> dict:
        record = self._record(sim_id)
        with record.cond:
            engine = record.engine
            info = {
                "simulation_id": record.id,
                "name": record.name,
                "state": record.state,
                "clock": jsonable(engine.clock if engine else Fraction(0)),
                "lineage": record.lineage,
                "error": record.error,
                "remaining": jsonable(record.remaining),
            }
            if engine is not None:
                info["counters"] = {
                    "requests_total": engine.requests_total,
                    "requests_successful": engine.requests_successful,
                    "requests_unsuccessful": engine.requests_unsuccessful,
                }
        return info

    def list_simulations(self) -> list[dict]:
        with self._registry_lock:
            records = list(self._records.values())
        out = []
        for record in sorted(records, key=lambda r: r.id):
            engine = record.engine
            out.append({"simulation_id": record.id, "name": record.name,
                        "state": record.state,
                        "clock": jsonable(engine.clock if engine else Fraction(0))})
        return out

    def snapshot_runtime(self, sim_id: str) -> dict:
        engine = self._settled_engine(sim_id)
        return engine.snapshot_runtime()

    def trace_digest(self, sim_id: str) -> str:
        """Content hash of the simulation's event log, traces, and counters;
        equal digests mean observably identical histories."""
        engine = self._settled_engine(sim_id)
        return engine.digest()

    def describe_topology(self, sim_id: str) -> dict:
        """Node and edge inventory with regions, costs, capacities, and the
        current up/down status; enough for an external agent to reason about
        placement without touching engine internals."""
        engine = self._settled_engine(sim_id)
        topo = engine.topology
        nodes = {}
        for nid in topo.node_ids():
            spec = topo.nodes[nid]
            nodes[nid] = {
                "cluster": topo.cluster_of[nid],
                "region": topo.region_of_node(nid),
                "role": spec.role,
                "cost": jsonable(spec.cost),
                "capacity": jsonable(dict(spec.capacity)),
                "used": jsonable(engine.capacity_used(nid)),
                "up": nid not in engine.node_down,
            }
        edges = []
        seen = set()
        for src in sorted(topo.adjacency):
            for dst, edge in sorted(topo.adjacency[src].items()):
                if edge.key in seen:
                    continue
                seen.add(edge.key)
                a, b = edge.key.split("|", 1)
                edges.append({"a": a, "b": b, "kind": edge.kind,
                              "latency": jsonable(edge.latency),
                              "bandwidth": jsonable(edge.bandwidth),
                              "distance_km": jsonable(edge.distance)})
        return {"simulation_id": sim_id, "version": topo.version,
                "regions": sorted(topo.regions),
                "nodes": nodes, "edges": edges}

    def list_users(self, sim_id: str) -> list[dict]:
        engine = self._settled_engine(sim_id)
        return [u.view() for u in sorted(engine.users.values(), key=lambda u: u.id)]

    def list_processes(self, sim_id: str) -> list[dict]:
        engine = self._settled_engine(sim_id)
        return [engine.processes[name].to_document()
                for name in sorted(engine.processes)]

    def list_deployed_applications(self, sim_id: str) -> list[dict]:
        engine = self._settled_engine(sim_id)
        out = []
        for name in sorted(engine.apps):
            app = engine.apps[name]
            deployments = [d.view() for d in sorted(engine.active_deployments(),
                                                    key=lambda d: d.id)
                           if d.app == name]
            out.append({"app": name,
                        "vnf_count": len(app.vnfs),
                        "message_count": len(app.messages),
                        "latency_requirement": jsonable(app.latency_requirement),
                        "deployments": deployments})
        return out

    def list_application_vnfs(self, sim_id: str, app: str) -> list[dict]:
        engine = self._settled_engine(sim_id)
        if app not in engine.apps:
            raise NotFoundError(f"unknown application {app!r}")
        return [v.to_document() for v in engine.apps[app].vnfs]

    def list_node_placements(self, sim_id: str) -> dict[str, list[dict]]:
        engine = self._settled_engine(sim_id)
        out: dict[str, list[dict]] = {}
        for d in sorted(engine.active_deployments(), key=lambda d: d.id):
            out.setdefault(d.node, []).append(d.view())
        return out

    # ---- metrics -----------------------------------------------------------------

    def _window(self, engine: Engine, window: Optional[Mapping[str, Any]]) -> metrics_mod.Window:
        if window is None:
            return metrics_mod.whole_run_window(engine)
        try:
            return metrics_mod.make_window(window["t_start"], window["t_end"])
        except KeyError as exc:
            raise InvalidArgumentError(f"window requires t_start and t_end, missing {exc}") from None

    def get_app_metrics(self, sim_id: str, app: Optional[str] = None,
                        window: Optional[Mapping[str, Any]] = None) -> dict:
        engine = self._settled_engine(sim_id)
        w = self._window(engine, window)
        apps = [app] if app is not None else sorted(engine.apps)
        result = {}
        for name in apps:
            result[name] = self._apply(metrics_mod.app_metrics, engine, name, w)
        return {"simulation_id": sim_id, "window": w.to_jsonable(),
                "applications": result}

    def get_network_metrics(self, sim_id: str,
                            window: Optional[Mapping[str, Any]] = None,
                            node_threshold: Any = None,
                            link_threshold: Any = None,
                            egress_rates: Mapping[str, Mapping[str, Any]] = ()) -> dict:
        engine = self._settled_engine(sim_id)
        w = self._window(engine, window)
        network = self._apply(metrics_mod.network_metrics, engine, w,
                              node_threshold, link_threshold)
        cost = self._apply(metrics_mod.cost_metrics, engine, w, egress_rates)
        network["cost"] = cost
        network["simulation_id"] = sim_id
        return network

    # ---- mutations ------------------------------------------------------------------

    def create_application(self, sim_id: str, document: Mapping[str, Any]) -> dict:
        engine = self._mutable_engine(sim_id)
        app = self._apply(Application.from_document, document)
        self._apply(engine.add_application, app)
        return {"simulation_id": sim_id, "app": app.name,
                "vnf_count": len(app.vnfs), "message_count": len(app.messages)}

    def deploy_vnf(self, sim_id: str, app: str, vnf: str, node: str,
                   chain_tag: Optional[str] = None) -> dict:
        engine = self._mutable_engine(sim_id)
        dep_id = self._apply(engine.deploy_vnf, app, vnf, node, chain_tag=chain_tag)
        return {"simulation_id": sim_id, "deployment_id": dep_id, "node": node}

    replicate_vnf = deploy_vnf

    def move_vnf(self, sim_id: str, deployment_id: str, node: str) -> dict:
        engine = self._mutable_engine(sim_id)
        new_id = self._apply(engine.move_vnf, deployment_id, node)
        return {"simulation_id": sim_id, "deployment_id": new_id, "node": node,
                "replaced": deployment_id}

    def remove_vnf(self, sim_id: str, deployment_id: str) -> dict:
        engine = self._mutable_engine(sim_id)
        self._apply(engine.remove_vnf, deployment_id)
        return {"simulation_id": sim_id, "removed": deployment_id}

    def create_users(self, sim_id: str, specs: list[Mapping[str, Any]],
                     pinned_tags: Optional[list[Optional[str]]] = None) -> dict:
        engine = self._mutable_engine(sim_id)
        parsed = [self._apply(UserSpec.from_document, s) for s in specs]
        ids = []
        for i, spec in enumerate(parsed):
            tag = pinned_tags[i] if pinned_tags else None
            ids.append(self._apply(engine.spawn_user, spec, pinned_tag=tag))
        return {"simulation_id": sim_id, "user_ids": ids, "count": len(ids)}

    def move_user(self, sim_id: str, user_id: str, node: str) -> dict:
        engine = self._mutable_engine(sim_id)
        self._apply(engine.move_user, user_id, node)
        return {"simulation_id": sim_id, "user_id": user_id, "node": node}

    def remove_user(self, sim_id: str, user_id: str) -> dict:
        engine = self._mutable_engine(sim_id)
        self._apply(engine.remove_user, user_id)
        return {"simulation_id": sim_id, "removed": user_id}

    def create_process(self, sim_id: str, document: Mapping[str, Any]) -> dict:
        engine = self._mutable_engine(sim_id)
        spec = self._apply(ProcessSpec.from_document, document)
        self._apply(engine.register_process, spec)
        return {"simulation_id": sim_id, "process": spec.name, "kind": spec.kind}

    def change_topology(self, sim_id: str, change: Mapping[str, Any]) -> dict:
        engine = self._mutable_engine(sim_id)
        self._apply(engine.apply_topology_change, change)
        return {"simulation_id": sim_id,
                "topology_version": engine.topology.version,
                "nodes": len(engine.topology.nodes)}

    def set_placement_policy(self, sim_id: str, policy: Optional[str]) -> dict:
        engine = self._mutable_engine(sim_id)
        self._apply(engine.set_placement_policy, policy or None)
        return {"simulation_id": sim_id, "placement_policy": engine.placement_policy}

    def fail_node(self, sim_id: str, node: str) -> dict:
        engine = self._mutable_engine(sim_id)
        self._apply(engine.fail_node, node)
        return {"simulation_id": sim_id, "node": node, "down": True}

    def recover_node(self, sim_id: str, node: str) -> dict:
        engine = self._mutable_engine(sim_id)
        self._apply(engine.recover_node, node)
        return {"simulation_id": sim_id, "node": node, "down": False}
