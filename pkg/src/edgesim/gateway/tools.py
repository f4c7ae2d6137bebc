"""Tool catalog: every simulation-service operation exposed as exactly one
named tool with a declared input/output schema.

Dispatch validates arguments, invokes the service, converts failures into
the fixed error taxonomy {not_found, invalid_state, invalid_argument,
capacity, internal}, and appends one audit record per invocation whether
it succeeded or not. Unknown tool names raise so the transport layer can
answer with a protocol-level error instead of a tool result.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Optional

from ..rationals import jsonable
from ..scenario import builder
from ..service import ServiceError, SimulationService
from .audit import AuditLog
from .validation import validate

# Rational quantities ride the wire as numbers or "p/q" strings.
NUM = {"type": ["number", "string"]}
OPT_NUM = {"anyOf": [{"type": ["number", "string"]}, {"type": "null"}]}
STR = {"type": "string"}
OBJ = {"type": "object"}

WINDOW_SCHEMA = {
    "type": "object",
    "properties": {"t_start": NUM, "t_end": NUM},
    "required": ["t_start", "t_end"],
}


def _in(properties: dict, required: tuple = ()) -> dict:
    return {"type": "object", "properties": properties,
            "required": list(required), "additionalProperties": False}


def _out(properties: dict, required: tuple = ()) -> dict:
    # Output schemas stay permissive: they document shape, they do not
    # forbid additional fields.
    return {"type": "object", "properties": properties,
            "required": list(required)}


_SIM_IN = _in({"simulation_id": STR}, required=("simulation_id",))
_ACK_OUT = _out({"simulation_id": STR, "state": STR}, required=("simulation_id",))


class ToolError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


class UnknownToolError(ToolError):
    pass


@dataclass(frozen=True)
class ToolDescriptor:
    name: str
    description: str
    input_schema: dict
    output_schema: dict
    handler: Callable[[dict], dict]

    def to_jsonable(self) -> dict:
        return {"name": self.name, "description": self.description,
                "inputSchema": self.input_schema,
                "outputSchema": self.output_schema}


class ToolRegistry:
    """Catalog + dispatcher over one SimulationService instance."""

    def __init__(self, service: Optional[SimulationService] = None,
                 seed: Any = 0, audit: Optional[AuditLog] = None,
                 scenario_root: Optional[str] = None):
        self.service = service if service is not None else SimulationService(seed=seed)
        self.audit = audit if audit is not None else AuditLog()
        self.scenario_root = scenario_root
        self._tools: dict[str, ToolDescriptor] = {}
        self._register_all()

    # ---- catalog -------------------------------------------------------

    def _add(self, name: str, description: str, input_schema: dict,
             output_schema: dict, handler: Callable[[dict], dict]) -> None:
        if name in self._tools:
            raise ValueError(f"duplicate tool name {name!r}")
        self._tools[name] = ToolDescriptor(
            name=name, description=description, input_schema=input_schema,
            output_schema=output_schema, handler=handler)

    def names(self) -> list[str]:
        return sorted(self._tools)

    def descriptors(self) -> list[dict]:
        return [self._tools[name].to_jsonable() for name in sorted(self._tools)]

    def get(self, name: str) -> Optional[ToolDescriptor]:
        return self._tools.get(name)

    # ---- dispatch ------------------------------------------------------

    def dispatch(self, actor: str, name: str, arguments: Any,
                 window_index: Optional[int] = None) -> tuple[dict, bool]:
        """Run one tool call. Returns (payload, is_error); the payload is
        already wire-safe. Every path appends exactly one audit record."""
        arguments = dict(arguments) if isinstance(arguments, dict) else {}
        sim_hint = arguments.get("simulation_id")
        tool = self._tools.get(name)
        if tool is None:
            payload = {"code": "unknown_tool",
                       "message": f"unknown tool {name!r}"}
            self.audit.append(actor, name, arguments, payload, "error",
                              simulation_id=sim_hint, window_index=window_index)
            raise UnknownToolError("unknown_tool", payload["message"])

        problems = validate(arguments, tool.input_schema)
        if problems:
            payload = {"code": "invalid_argument",
                       "message": "; ".join(problems)}
            self.audit.append(actor, name, arguments, payload, "error",
                              simulation_id=sim_hint, window_index=window_index)
            return payload, True

        try:
            result = jsonable(tool.handler(arguments))
        except ServiceError as exc:
            payload = {"code": exc.code, "message": str(exc)}
            self.audit.append(actor, name, arguments, payload, "error",
                              simulation_id=sim_hint, window_index=window_index)
            return payload, True
        except ToolError as exc:
            payload = {"code": exc.code, "message": exc.message}
            self.audit.append(actor, name, arguments, payload, "error",
                              simulation_id=sim_hint, window_index=window_index)
            return payload, True
        except Exception as exc:
            payload = {"code": "internal",
                       "message": f"{type(exc).__name__}: {exc}"}
            self.audit.append(actor, name, arguments, payload, "error",
                              simulation_id=sim_hint, window_index=window_index)
            return payload, True

        if sim_hint is None and isinstance(result, dict):
            sim_hint = result.get("simulation_id")
        self.audit.append(actor, name, arguments, result, "ok",
                          simulation_id=sim_hint, window_index=window_index)
        return result, False

    # ---- registration ----------------------------------------------------

    def _register_all(self) -> None:
        svc = self.service

        # -- creation and lifecycle --
        self._add(
            "create_default_simulation",
            "Create a ready-to-run simulation from the built-in scenario: "
            "generic clusters, the standard three-application catalog, one "
            "user and one placed chain per application.",
            _in({"clusters": {"type": "integer", "minimum": 1},
                 "nodes_per_cluster": {"type": "integer", "minimum": 2},
                 "seed": {"type": ["integer", "string", "number"]},
                 "name": STR}),
            _out({"simulation_id": STR, "name": STR, "state": STR,
                  "clusters": {"type": "integer"},
                  "nodes_total": {"type": "integer"},
                  "applications": {"type": "array", "items": STR},
                  "summary": STR},
                 required=("simulation_id", "summary")),
            self._create_default)

        self._add(
            "create_simulation",
            "Register a simulation from explicit scenario documents "
            "(topology, applications, users, processes, placements), or "
            "from a named scenario directory under the server's root.",
            _in({"scenario": OBJ, "scenario_path": STR, "name": STR}),
            _out({"simulation_id": STR, "name": STR, "state": STR},
                 required=("simulation_id",)),
            self._create_simulation)

        self._add(
            "initialize_simulation",
            "Build the engine for a created simulation and mark it runnable.",
            _SIM_IN, _ACK_OUT,
            lambda a: svc.initialize(a["simulation_id"]))

        self._add(
            "list_simulations",
            "All registered simulations with state and clock.",
            _in({}),
            _out({"simulations": {"type": "array", "items": OBJ}},
                 required=("simulations",)),
            lambda a: {"simulations": svc.list_simulations()})

        self._add(
            "get_simulation_state",
            "Lifecycle state, clock, lineage, and request counters of one "
            "simulation; available in any state, including while running.",
            _SIM_IN,
            _out({"simulation_id": STR, "state": STR, "clock": NUM},
                 required=("simulation_id", "state")),
            lambda a: svc.get_state(a["simulation_id"]))

        self._add(
            "run_simulation_for",
            "Advance the simulation clock by `duration`, executing queued "
            "events on a worker thread; returns immediately with the target "
            "time. `step` bounds how long pause/stop requests wait.",
            _in({"simulation_id": STR, "duration": NUM, "step": NUM},
                required=("simulation_id", "duration")),
            _out({"simulation_id": STR, "state": STR, "until": NUM},
                 required=("simulation_id", "until")),
            lambda a: svc.run_for(a["simulation_id"], a["duration"],
                                  a.get("step")))

        self._add(
            "schedule_for",
            "Run the window [start, start+duration): the engine first "
            "advances to `start`, then executes the window.",
            _in({"simulation_id": STR, "start": NUM, "duration": NUM,
                 "step": NUM},
                required=("simulation_id", "start", "duration")),
            _out({"simulation_id": STR, "state": STR, "until": NUM,
                  "scheduled_start": NUM},
                 required=("simulation_id", "scheduled_start")),
            lambda a: svc.schedule_for(a["simulation_id"], a["start"],
                                       a["duration"], a.get("step")))

        self._add(
            "wait_simulation_until_ready",
            "Block until the simulation leaves the running state (or the "
            "timeout elapses); returns the settled state and clock.",
            _in({"simulation_id": STR, "timeout": NUM},
                required=("simulation_id",)),
            _out({"simulation_id": STR, "state": STR,
                  "timed_out": {"type": "boolean"}, "clock": NUM},
                 required=("simulation_id", "state", "timed_out")),
            lambda a: svc.wait_until_idle(a["simulation_id"], a.get("timeout")))

        self._add(
            "pause_simulation",
            "Request a pause; takes effect at the next step boundary.",
            _SIM_IN, _ACK_OUT,
            lambda a: svc.pause(a["simulation_id"]))

        self._add(
            "resume_simulation",
            "Resume a paused simulation's remaining scheduled window.",
            _SIM_IN, _ACK_OUT,
            lambda a: svc.resume(a["simulation_id"]))

        self._add(
            "stop_simulation",
            "Stop a simulation permanently (terminal state).",
            _SIM_IN, _ACK_OUT,
            lambda a: svc.stop(a["simulation_id"]))

        self._add(
            "destroy_simulation",
            "Stop if needed and remove the simulation from the registry.",
            _SIM_IN,
            _out({"simulation_id": STR, "destroyed": {"type": "boolean"}},
                 required=("simulation_id", "destroyed")),
            lambda a: svc.destroy(a["simulation_id"]))

        self._add(
            "fork_simulation",
            "Deep-copy an initialized or paused simulation into a new "
            "record; `fresh_seed` reseeds the copy so futures diverge.",
            _in({"simulation_id": STR, "name": STR,
                 "fresh_seed": {"type": ["integer", "string", "number"]}},
                required=("simulation_id",)),
            _out({"simulation_id": STR, "parent": STR, "state": STR},
                 required=("simulation_id", "parent")),
            self._fork)

        # -- entity reads --
        self._add(
            "get_simulation_runtime_snapshot",
            "Clock, user/deployment counts, in-flight requests, down nodes, "
            "and unreachable links of a settled simulation.",
            _SIM_IN,
            _out({"clock": NUM, "users": {"type": "integer"}},
                 required=("clock",)),
            lambda a: svc.snapshot_runtime(a["simulation_id"]))

        self._add(
            "get_simulation_topology",
            "Node and edge inventory: clusters, regions, roles, costs, "
            "capacities and current usage, up/down status, link attributes.",
            _SIM_IN,
            _out({"simulation_id": STR, "version": {"type": "integer"},
                  "nodes": OBJ, "edges": {"type": "array", "items": OBJ}},
                 required=("nodes", "edges")),
            lambda a: svc.describe_topology(a["simulation_id"]))

        self._add(
            "list_simulation_users",
            "All active users with node, application, and pinned chain.",
            _SIM_IN,
            _out({"simulation_id": STR,
                  "users": {"type": "array", "items": OBJ}},
                 required=("users",)),
            lambda a: {"simulation_id": a["simulation_id"],
                       "users": svc.list_users(a["simulation_id"])})

        self._add(
            "list_simulation_processes",
            "All registered background processes with kind and parameters.",
            _SIM_IN,
            _out({"simulation_id": STR,
                  "processes": {"type": "array", "items": OBJ}},
                 required=("processes",)),
            lambda a: {"simulation_id": a["simulation_id"],
                       "processes": svc.list_processes(a["simulation_id"])})

        self._add(
            "list_simulation_deployed_applications",
            "Applications with their chain length, latency requirement, and "
            "active deployments.",
            _SIM_IN,
            _out({"simulation_id": STR,
                  "applications": {"type": "array", "items": OBJ}},
                 required=("applications",)),
            lambda a: {"simulation_id": a["simulation_id"],
                       "applications":
                       svc.list_deployed_applications(a["simulation_id"])})

        self._add(
            "list_simulation_application_vnfs",
            "The VNF chain of one application: names, service demands, "
            "footprints.",
            _in({"simulation_id": STR, "app": STR},
                required=("simulation_id", "app")),
            _out({"simulation_id": STR, "app": STR,
                  "vnfs": {"type": "array", "items": OBJ}},
                 required=("vnfs",)),
            lambda a: {"simulation_id": a["simulation_id"], "app": a["app"],
                       "vnfs": svc.list_application_vnfs(a["simulation_id"],
                                                         a["app"])})

        self._add(
            "list_simulation_node_placements",
            "Active deployments grouped by hosting node.",
            _SIM_IN,
            _out({"simulation_id": STR, "placements": OBJ},
                 required=("placements",)),
            lambda a: {"simulation_id": a["simulation_id"],
                       "placements":
                       svc.list_node_placements(a["simulation_id"])})

        # -- metrics --
        self._add(
            "get_simulation_application_metrics",
            "Per-application request counts and response/processing/waiting "
            "statistics over a time window (whole run when omitted).",
            _in({"simulation_id": STR, "app": STR, "window": WINDOW_SCHEMA},
                required=("simulation_id",)),
            _out({"simulation_id": STR, "window": OBJ, "applications": OBJ},
                 required=("simulation_id", "applications")),
            lambda a: svc.get_app_metrics(a["simulation_id"], a.get("app"),
                                          a.get("window")))

        self._add(
            "get_simulation_network_metrics",
            "Node and link utilization, users per node, and placement/"
            "egress cost over a time window; optional thresholds flag "
            "overload and congestion candidates.",
            _in({"simulation_id": STR, "window": WINDOW_SCHEMA,
                 "node_threshold": NUM, "link_threshold": NUM,
                 "egress_rates": OBJ},
                required=("simulation_id",)),
            _out({"simulation_id": STR, "node_utilization": OBJ,
                  "link_utilization": OBJ, "cost": OBJ},
                 required=("simulation_id", "node_utilization")),
            lambda a: svc.get_network_metrics(
                a["simulation_id"], a.get("window"), a.get("node_threshold"),
                a.get("link_threshold"), a.get("egress_rates") or {}))

        # -- mutations --
        self._add(
            "create_simulation_application",
            "Add an application (VNF chain plus message sequence) to a "
            "simulation.",
            _in({"simulation_id": STR, "application": OBJ},
                required=("simulation_id", "application")),
            _out({"simulation_id": STR, "app": STR,
                  "vnf_count": {"type": "integer"}},
                 required=("app",)),
            lambda a: svc.create_application(a["simulation_id"],
                                             a["application"]))

        self._add(
            "deploy_application_vnf",
            "Place a new deployment of one VNF on a node.",
            _in({"simulation_id": STR, "app": STR, "vnf": STR, "node": STR,
                 "chain_tag": STR},
                required=("simulation_id", "app", "vnf", "node")),
            _out({"simulation_id": STR, "deployment_id": STR, "node": STR},
                 required=("deployment_id",)),
            lambda a: svc.deploy_vnf(a["simulation_id"], a["app"], a["vnf"],
                                     a["node"], a.get("chain_tag")))

        self._add(
            "replicate_application_vnf",
            "Add another deployment of an already-deployed VNF on a node "
            "(same operation as deploy, named for the scale-out intent).",
            _in({"simulation_id": STR, "app": STR, "vnf": STR, "node": STR,
                 "chain_tag": STR},
                required=("simulation_id", "app", "vnf", "node")),
            _out({"simulation_id": STR, "deployment_id": STR, "node": STR},
                 required=("deployment_id",)),
            lambda a: svc.replicate_vnf(a["simulation_id"], a["app"],
                                        a["vnf"], a["node"],
                                        a.get("chain_tag")))

        self._add(
            "move_application_vnf",
            "Relocate a deployment: a replacement starts on the target node "
            "and the original drains (finishes in-flight work, takes no new).",
            _in({"simulation_id": STR, "deployment_id": STR, "node": STR},
                required=("simulation_id", "deployment_id", "node")),
            _out({"simulation_id": STR, "deployment_id": STR, "node": STR,
                  "replaced": STR},
                 required=("deployment_id",)),
            lambda a: svc.move_vnf(a["simulation_id"], a["deployment_id"],
                                   a["node"]))

        self._add(
            "remove_application_vnf",
            "Drain and retire one deployment.",
            _in({"simulation_id": STR, "deployment_id": STR},
                required=("simulation_id", "deployment_id")),
            _out({"simulation_id": STR, "removed": STR},
                 required=("removed",)),
            lambda a: svc.remove_vnf(a["simulation_id"], a["deployment_id"]))

        self._add(
            "create_users",
            "Spawn users from a list of specs {app_ref, node, generation}; "
            "optional pinned_tags bind each user to a deployment chain.",
            _in({"simulation_id": STR,
                 "users": {"type": "array", "items": OBJ},
                 "pinned_tags": {"type": "array",
                                 "items": {"anyOf": [STR, {"type": "null"}]}}},
                required=("simulation_id", "users")),
            _out({"simulation_id": STR,
                  "user_ids": {"type": "array", "items": STR},
                  "count": {"type": "integer"}},
                 required=("user_ids",)),
            lambda a: svc.create_users(a["simulation_id"], a["users"],
                                       a.get("pinned_tags")))

        self._add(
            "move_simulation_user",
            "Relocate a user to another node; in-flight requests keep their "
            "original return address.",
            _in({"simulation_id": STR, "user_id": STR, "node": STR},
                required=("simulation_id", "user_id", "node")),
            _out({"simulation_id": STR, "user_id": STR, "node": STR},
                 required=("user_id",)),
            lambda a: svc.move_user(a["simulation_id"], a["user_id"],
                                    a["node"]))

        self._add(
            "remove_simulation_user",
            "Deactivate a user; no further requests are emitted.",
            _in({"simulation_id": STR, "user_id": STR},
                required=("simulation_id", "user_id")),
            _out({"simulation_id": STR, "removed": STR},
                 required=("removed",)),
            lambda a: svc.remove_user(a["simulation_id"], a["user_id"]))

        self._add(
            "create_process",
            "Register a background process (user mobility, hotspot, node "
            "failure/recovery) from its document.",
            _in({"simulation_id": STR, "process": OBJ},
                required=("simulation_id", "process")),
            _out({"simulation_id": STR, "process": STR, "kind": STR},
                 required=("process",)),
            lambda a: svc.create_process(a["simulation_id"], a["process"]))

        self._add(
            "change_simulation_topology",
            "Apply a topology mutation (add/remove node or cluster, change "
            "link attributes); occupied nodes are protected.",
            _in({"simulation_id": STR, "change": OBJ},
                required=("simulation_id", "change")),
            _out({"simulation_id": STR,
                  "topology_version": {"type": "integer"},
                  "nodes": {"type": "integer"}},
                 required=("topology_version",)),
            lambda a: svc.change_topology(a["simulation_id"], a["change"]))

        self._add(
            "set_placement_policy",
            "Select the engine-side placement policy ('greedy' deploys one "
            "chain per user; null disables automatic placement).",
            _in({"simulation_id": STR,
                 "policy": {"anyOf": [STR, {"type": "null"}]}},
                required=("simulation_id",)),
            _out({"simulation_id": STR,
                  "placement_policy": {"anyOf": [STR, {"type": "null"}]}},
                 required=("simulation_id",)),
            lambda a: svc.set_placement_policy(a["simulation_id"],
                                               a.get("policy")))

        self._add(
            "fail_simulation_node",
            "Take a node down: queued and in-service work there is lost, "
            "and routes avoid it until recovery.",
            _in({"simulation_id": STR, "node": STR},
                required=("simulation_id", "node")),
            _out({"simulation_id": STR, "node": STR,
                  "down": {"type": "boolean"}},
                 required=("node",)),
            lambda a: svc.fail_node(a["simulation_id"], a["node"]))

        self._add(
            "recover_simulation_node",
            "Bring a failed node back up.",
            _in({"simulation_id": STR, "node": STR},
                required=("simulation_id", "node")),
            _out({"simulation_id": STR, "node": STR,
                  "down": {"type": "boolean"}},
                 required=("node",)),
            lambda a: svc.recover_node(a["simulation_id"], a["node"]))

        # -- audit --
        self._add(
            "export_audit_log",
            "Chronological tool-call records, filterable by actor, "
            "simulation, or tool name.",
            _in({"actor": STR, "simulation_id": STR, "tool": STR}),
            _out({"records": {"type": "array", "items": OBJ},
                  "count": {"type": "integer"}},
                 required=("records", "count")),
            self._export_audit)

    # ---- multi-step handlers ---------------------------------------------

    def _create_default(self, a: dict) -> dict:
        clusters = a.get("clusters", 3)
        nodes_per_cluster = a.get("nodes_per_cluster", 10)
        docs = builder.default_documents(clusters=clusters,
                                         nodes_per_cluster=nodes_per_cluster,
                                         seed=a.get("seed", self.service.seed))
        sim_id = self.service.create_simulation(docs, name=a.get("name"))
        nodes_total = sum(len(c["nodes"])
                          for c in docs["topology"]["clusters"])
        app_names = [app["name"] for app in docs["applications"]]
        return {
            "simulation_id": sim_id,
            "name": a.get("name") or sim_id,
            "state": "created",
            "clusters": clusters,
            "nodes_total": nodes_total,
            "applications": app_names,
            "summary": (f"created simulation {sim_id}: {clusters} clusters, "
                        f"{nodes_total} nodes total, "
                        f"{len(app_names)} applications"),
        }

    def _create_simulation(self, a: dict) -> dict:
        scenario = a.get("scenario")
        if scenario is None:
            path = a.get("scenario_path")
            if path is None:
                raise ToolError("invalid_argument",
                                "provide either 'scenario' or 'scenario_path'")
            from pathlib import Path
            root = Path(self.scenario_root) if self.scenario_root else Path(".")
            target = root / path
            if not (target / "scenario.json").exists():
                raise ToolError("not_found",
                                f"no scenario at {str(target)!r}")
            scenario = builder.read_scenario(target)
        sim_id = self.service.create_simulation(scenario, name=a.get("name"))
        return {"simulation_id": sim_id,
                "name": a.get("name") or sim_id,
                "state": "created"}

    def _fork(self, a: dict) -> dict:
        child = self.service.fork(a["simulation_id"], name=a.get("name"),
                                  fresh_seed=a.get("fresh_seed"))
        state = self.service.get_state(child)
        return {"simulation_id": child, "parent": a["simulation_id"],
                "state": state["state"], "clock": state["clock"]}

    def _export_audit(self, a: dict) -> dict:
        records = self.audit.export(actor=a.get("actor"),
                                    simulation_id=a.get("simulation_id"),
                                    tool=a.get("tool"))
        return {"records": [r.to_jsonable() for r in records],
                "count": len(records)}
