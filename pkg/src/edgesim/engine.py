"""Discrete-event core: event queue, request lifecycle, placement state.

One Engine instance is one simulation. Events pop in (time, sequence) order;
time is an exact rational so ordering never depends on float rounding.
Requests traverse their application's VNF chain: each chain leg picks a
serving deployment, the message crosses the node graph edge by edge with
fair-share link contention, each deployment serves FIFO one request at a
time, and the response retraces the forward route. Every completed or lost
request leaves a trace; transmissions and service executions are logged
separately for windowed metrics.
"""

from __future__ import annotations

import copy
import hashlib
import heapq
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Mapping, Optional

from .rationals import dumps_canonical, frac, jsonable
from .topology import Edge, Topology, mutate_topology, shortest_path
from .workload import (USER_ENDPOINT, Application, Distribution, ProcessSpec,
                       UserSpec)

EVENT_KINDS = ("request_emit", "message_arrival", "service_complete",
               "process_tick", "window_boundary")

LOSS_MISSING_STAGE = "missing stage"
LOSS_NO_PATH = "no path"
LOSS_NODE_FAILURE = "node_failure"

POLICY_GREEDY = "greedy"


class EngineError(ValueError):
    """Invalid operation against the running simulation state."""


class UnknownEntityError(EngineError):
    """Referenced app/node/user/deployment/process does not exist."""


class CapacityError(EngineError):
    """Deployment would not fit on the target node."""


@dataclass
class Deployment:
    id: str
    app: str
    vnf: str
    node: str
    created_at: Fraction
    active: bool = True
    # Deployments sharing a chain tag form one logical service instance;
    # users pinned to the tag prefer them over nearer replicas.
    chain_tag: Optional[str] = None

    def view(self) -> dict:
        return {"id": self.id, "app": self.app, "vnf": self.vnf,
                "node": self.node, "created_at": jsonable(self.created_at),
                "active": self.active, "chain_tag": self.chain_tag}


@dataclass
class UserState:
    id: str
    app_ref: str
    node: str
    generation: Distribution
    created_at: Fraction
    active: bool = True
    pinned_tag: Optional[str] = None

    def view(self) -> dict:
        return {"id": self.id, "app_ref": self.app_ref, "node": self.node,
                "generation": self.generation.to_document(),
                "created_at": jsonable(self.created_at), "active": self.active,
                "pinned_tag": self.pinned_tag}


@dataclass
class HopRecord:
    link: str
    enqueue: Fraction
    duration: Fraction
    distance: Fraction


@dataclass
class ServiceVisit:
    vnf: str
    deployment: str
    node: str
    arrival: Fraction
    start: Optional[Fraction] = None
    end: Optional[Fraction] = None


@dataclass
class RequestTrace:
    request_id: int
    app: str
    user: str
    emit_time: Fraction
    hops: list[HopRecord] = field(default_factory=list)
    visits: list[ServiceVisit] = field(default_factory=list)
    path_nodes: list[str] = field(default_factory=list)
    completion: Optional[Fraction] = None
    failure: Optional[str] = None

    @property
    def succeeded(self) -> bool:
        return self.completion is not None and self.failure is None

    @property
    def network_time(self) -> Fraction:
        return sum((h.duration for h in self.hops), Fraction(0))

    @property
    def processing_time(self) -> Fraction:
        return sum((v.end - v.start for v in self.visits if v.end is not None),
                   Fraction(0))

    @property
    def waiting_time(self) -> Fraction:
        return sum((v.start - v.arrival for v in self.visits if v.start is not None),
                   Fraction(0))

    @property
    def response_time(self) -> Optional[Fraction]:
        if self.completion is None:
            return None
        return self.completion - self.emit_time

    @property
    def hop_count(self) -> int:
        return len(self.hops)

    @property
    def distance(self) -> Fraction:
        return sum((h.distance for h in self.hops), Fraction(0))

    def to_record(self) -> dict:
        """Field order is the documented trace-export order."""
        return {
            "request": self.request_id, "app": self.app, "user": self.user,
            "emit": jsonable(self.emit_time),
            "completion": jsonable(self.completion),
            "failure": self.failure,
            "response": jsonable(self.response_time),
            "network": jsonable(self.network_time),
            "processing": jsonable(self.processing_time),
            "waiting": jsonable(self.waiting_time),
            "hops": self.hop_count,
            "distance": jsonable(self.distance),
            "path": list(self.path_nodes),
        }


@dataclass
class TransmissionRecord:
    link: str
    src: str
    dst: str
    request_id: int
    app: str
    size: Fraction
    enqueue: Fraction
    end: Fraction

    def to_record(self) -> dict:
        return {"link": self.link, "src": self.src, "dst": self.dst,
                "request": self.request_id, "app": self.app,
                "size": jsonable(self.size), "enqueue": jsonable(self.enqueue),
                "end": jsonable(self.end)}


@dataclass
class ServiceRecord:
    node: str
    app: str
    vnf: str
    deployment: str
    request_id: int
    arrival: Fraction
    start: Fraction
    end: Fraction

    def to_record(self) -> dict:
        return {"node": self.node, "app": self.app, "vnf": self.vnf,
                "deployment": self.deployment, "request": self.request_id,
                "arrival": jsonable(self.arrival), "start": jsonable(self.start),
                "end": jsonable(self.end)}


@dataclass
class _Request:
    id: int
    app: Application
    user_id: str
    origin_node: str
    emit_time: Fraction
    trace: RequestTrace
    pinned_tag: Optional[str] = None
    stage: int = 0
    node: str = ""
    leg: list[str] = field(default_factory=list)
    leg_pos: int = 0
    message_size: Fraction = Fraction(0)
    target_dep: Optional[str] = None
    rerouted: bool = False
    route_snapshot: tuple[int, int] = (0, 0)
    done: bool = False


@dataclass
class _Transfer:
    id: int
    request_id: int
    edge: Edge
    src: str
    dst: str
    size: Fraction
    enqueue: Fraction
    remaining: Fraction
    epoch: int = 0


@dataclass
class _EdgeFlow:
    """Fluid fair-share state of one edge: in-flight transfers split the
    bandwidth equally; `last` is the instant the remainders were valid."""
    bandwidth: Fraction
    last: Fraction
    transfers: dict[int, _Transfer] = field(default_factory=dict)

    def advance(self, now: Fraction) -> None:
        dt = now - self.last
        if dt > 0 and self.transfers:
            share = self.bandwidth * dt / len(self.transfers)
            for t in self.transfers.values():
                t.remaining -= share
        self.last = now


class Engine:
    """Single-simulation discrete-event state machine."""

    def __init__(self, topology: Topology, applications: list[Application],
                 seed: Any, users: list[UserSpec] = (),
                 processes: list[ProcessSpec] = (),
                 placements: list[Mapping[str, Any]] = (),
                 placement_policy: Optional[str] = None):
        self.topology = topology
        self.apps: dict[str, Application] = {}
        for app in applications:
            if app.name in self.apps:
                raise EngineError(f"duplicate application {app.name!r}")
            self.apps[app.name] = app
        self.seed = seed
        self.clock = Fraction(0)
        self.workload_rng = self._stream("workload")
        self.process_rng = self._stream("process")
        self.placement_rng = self._stream("placement")

        self._seq = 0
        self._queue: list[tuple] = []
        self.event_log: list[tuple] = []

        self.node_down: set[str] = set()
        self.up_epoch = 0
        self._route_cache: dict[tuple[str, str], Optional[tuple[str, ...]]] = {}

        self.deployments: dict[str, Deployment] = {}
        self._dep_counter = 0
        self._dep_busy: dict[str, Optional[int]] = {}
        self._dep_queue: dict[str, list[int]] = {}

        self.users: dict[str, UserState] = {}
        self._user_counter = 0

        self.processes: dict[str, ProcessSpec] = {}
        self._process_state: dict[str, dict] = {}
        self.custom_handlers: dict[str, Callable[["Engine", ProcessSpec], None]] = {}

        self._requests = 0
        self._inflight: dict[int, _Request] = {}
        self._transfers: dict[int, _Transfer] = {}
        self._transfer_counter = 0
        self._flows: dict[str, _EdgeFlow] = {}

        self.requests_total = 0
        self.requests_successful = 0
        self.requests_unsuccessful = 0

        self.traces: list[RequestTrace] = []
        self.transmissions: list[TransmissionRecord] = []
        self.service_log: list[ServiceRecord] = []
        self.warnings: list[str] = []

        self.placement_policy: Optional[str] = None
        self._policy_chains: dict[str, list[str]] = {}

        for p in placements:
            self.deploy_vnf(p["app"], p["vnf"], p["node"],
                            chain_tag=p.get("chain_tag"))
        if placement_policy:
            self.set_placement_policy(placement_policy)
        for spec in users:
            self.spawn_user(spec)
        for spec in processes:
            self.register_process(spec)

    def _stream(self, name: str) -> random.Random:
        return random.Random(f"{self.seed}/{name}")

    # ---- event queue ------------------------------------------------------

    def _push(self, time: Fraction, kind: str, payload: tuple) -> int:
        self._seq += 1
        heapq.heappush(self._queue, (time, self._seq, kind, payload))
        return self._seq

    def run_until(self, t_stop: Any) -> Fraction:
        """Execute every queued event with time < t_stop, then set the clock.

        An empty queue just fast-forwards the clock. A window-boundary
        record is appended to the event log to mark the stop point.
        """
        t_stop = frac(t_stop)
        if t_stop < self.clock:
            raise EngineError(f"cannot run backwards: clock {self.clock} > target {t_stop}")
        while self._queue and self._queue[0][0] < t_stop:
            time, seq, kind, payload = heapq.heappop(self._queue)
            self.clock = time
            self._dispatch(time, seq, kind, payload)
        self.clock = t_stop
        self._seq += 1
        self.event_log.append((str(t_stop), self._seq, "window_boundary", ""))
        return self.clock

    def peek_next_event_time(self) -> Optional[Fraction]:
        return self._queue[0][0] if self._queue else None

    def _dispatch(self, time: Fraction, seq: int, kind: str, payload: tuple) -> None:
        if kind == "request_emit":
            summary = self._on_emit(*payload)
        elif kind == "message_arrival":
            summary = self._on_message_arrival(*payload)
        elif kind == "service_complete":
            summary = self._on_service_complete(*payload)
        elif kind == "process_tick":
            summary = self._on_process_tick(*payload)
        else:
            summary = ""
        if summary is not None:
            self.event_log.append((str(time), seq, kind, summary))

    # ---- routing ----------------------------------------------------------

    def _invalidate_routes(self) -> None:
        self._route_cache.clear()

    def _route(self, src: str, dst: str) -> Optional[list[str]]:
        key = (src, dst)
        if key not in self._route_cache:
            path = shortest_path(self.topology, src, dst,
                                 blocked=frozenset(self.node_down))
            self._route_cache[key] = None if path is None else tuple(path)
        cached = self._route_cache[key]
        return None if cached is None else list(cached)

    def _stage_candidates(self, app: str, vnf: str,
                          pinned_tag: Optional[str]) -> tuple[list[Deployment], bool]:
        """Active deployments of a stage on up nodes. Returns (candidates,
        any_active): any_active distinguishes "missing stage" from
        "everything is down"."""
        active = [d for d in self.deployments.values()
                  if d.active and d.app == app and d.vnf == vnf]
        up = [d for d in active if d.node not in self.node_down]
        if pinned_tag is not None:
            pinned = [d for d in up if d.chain_tag == pinned_tag]
            if pinned:
                up = pinned
        return up, bool(active)

    # ---- request lifecycle ------------------------------------------------

    def _on_emit(self, user_id: str) -> Optional[str]:
        user = self.users.get(user_id)
        if user is None or not user.active:
            return None
        interval = user.generation.sample(self.workload_rng)
        self._push(self.clock + interval, "request_emit", (user_id,))

        app = self.apps[user.app_ref]
        self._requests += 1
        rid = self._requests
        trace = RequestTrace(request_id=rid, app=app.name, user=user_id,
                             emit_time=self.clock, path_nodes=[user.node])
        req = _Request(id=rid, app=app, user_id=user_id, origin_node=user.node,
                       emit_time=self.clock, trace=trace,
                       pinned_tag=user.pinned_tag, node=user.node,
                       message_size=app.messages[0].size,
                       route_snapshot=(self.topology.version, self.up_epoch))
        self.requests_total += 1
        self._inflight[rid] = req
        if user.node in self.node_down:
            self._lose(req, LOSS_NODE_FAILURE)
        else:
            self._begin_stage_leg(req, initial=True)
        return f"{user_id} req={rid}"

    def _begin_stage_leg(self, req: _Request, initial: bool = False) -> None:
        """Pick the serving deployment for the current stage, route to it,
        and start the first edge transfer (or deliver locally)."""
        vnf = req.app.vnfs[req.stage]
        candidates, any_active = self._stage_candidates(req.app.name, vnf.name,
                                                        req.pinned_tag)
        if not any_active:
            self._lose(req, LOSS_MISSING_STAGE)
            return
        best: Optional[tuple] = None
        for d in sorted(candidates, key=lambda d: (d.node, d.id)):
            path = self._route(req.node, d.node)
            if path is None:
                continue
            lat = self._path_latency(path)
            key = (lat, d.node, d.id)
            if best is None or key < best[0]:
                best = (key, d, path)
        if best is None:
            # All candidates considered and none reachable: there is nothing
            # left to reroute to, so this is a terminal loss.
            self._lose(req, LOSS_NODE_FAILURE if not candidates else LOSS_NO_PATH)
            return
        _, dep, path = best
        req.target_dep = dep.id
        req.message_size = req.app.messages[req.stage].size
        req.leg = path
        req.leg_pos = 0
        if len(path) == 1:
            self._arrive_at_deployment(req, dep)
        else:
            self._start_edge(req)

    def _path_latency(self, path: list[str]) -> Fraction:
        total = Fraction(0)
        for u, v in zip(path, path[1:]):
            total += self.topology.adjacency[u][v].latency
        return total

    def _start_edge(self, req: _Request) -> None:
        u = req.leg[req.leg_pos]
        v = req.leg[req.leg_pos + 1]
        if v in self.node_down:
            # Next hop went down after this leg was routed: reroute from the
            # current node instead of transmitting into a dead hop.
            self._reroute_or_lose(req)
            return
        edge = self.topology.adjacency[u][v]
        self._transfer_counter += 1
        tid = self._transfer_counter
        transfer = _Transfer(id=tid, request_id=req.id, edge=edge, src=u, dst=v,
                             size=req.message_size, enqueue=self.clock,
                             remaining=req.message_size)
        self._transfers[tid] = transfer
        if transfer.size == 0:
            self._push(self.clock + edge.latency, "message_arrival",
                       (tid, 0, "node"))
            return
        flow = self._flows.get(edge.key)
        if flow is None:
            flow = _EdgeFlow(bandwidth=edge.bandwidth, last=self.clock)
            self._flows[edge.key] = flow
        flow.advance(self.clock)
        flow.transfers[tid] = transfer
        self._reproject(flow)

    def _reproject(self, flow: _EdgeFlow) -> None:
        """Reschedule every serialization-finish event on the edge after a
        membership change; stale events are dropped by the epoch guard."""
        n = len(flow.transfers)
        for t in flow.transfers.values():
            t.epoch += 1
            end = flow.last + t.remaining * n / flow.bandwidth
            self._push(end, "message_arrival", (t.id, t.epoch, "link"))

    def _on_message_arrival(self, tid: int, epoch: int, phase: str) -> Optional[str]:
        transfer = self._transfers.get(tid)
        if transfer is None or transfer.epoch != epoch:
            return None
        if phase == "link":
            # Serialization done: the transfer leaves the shared link and
            # propagation begins.
            flow = self._flows[transfer.edge.key]
            flow.advance(self.clock)
            del flow.transfers[tid]
            if flow.transfers:
                self._reproject(flow)
            else:
                del self._flows[transfer.edge.key]
            transfer.epoch += 1
            self._push(self.clock + transfer.edge.latency, "message_arrival",
                       (tid, transfer.epoch, "node"))
            return f"link {transfer.edge.key} req={transfer.request_id}"

        del self._transfers[tid]
        req = self._inflight.get(transfer.request_id)
        if req is None or req.done:
            return None
        req.trace.hops.append(HopRecord(link=transfer.edge.key,
                                        enqueue=transfer.enqueue,
                                        duration=self.clock - transfer.enqueue,
                                        distance=transfer.edge.distance))
        self.transmissions.append(TransmissionRecord(
            link=transfer.edge.key, src=transfer.src, dst=transfer.dst,
            request_id=req.id, app=req.app.name, size=transfer.size,
            enqueue=transfer.enqueue, end=self.clock))
        arrived = req.leg[req.leg_pos + 1]
        req.trace.path_nodes.append(arrived)
        if arrived in self.node_down:
            # Delivered into a node that failed mid-flight: the hop cost is
            # paid, the request falls back to the previous node.
            self._reroute_or_lose(req)
            return f"bounce {arrived} req={req.id}"
        req.leg_pos += 1
        req.node = arrived
        if req.leg_pos == len(req.leg) - 1:
            if req.stage >= len(req.app.vnfs):
                self._complete(req)
            else:
                dep = self.deployments[req.target_dep]
                self._arrive_at_deployment(req, dep)
        else:
            self._start_edge(req)
        return f"{arrived} req={req.id}"

    def _reroute_or_lose(self, req: _Request) -> None:
        if req.rerouted:
            self._lose(req, LOSS_NODE_FAILURE)
            return
        req.rerouted = True
        if req.stage >= len(req.app.vnfs):
            self._begin_response_leg(req)
        else:
            self._begin_stage_leg(req)

    def _arrive_at_deployment(self, req: _Request, dep: Deployment) -> None:
        visit = ServiceVisit(vnf=req.app.vnfs[req.stage].name, deployment=dep.id,
                             node=dep.node, arrival=self.clock)
        req.trace.visits.append(visit)
        if self._dep_busy.get(dep.id) is None:
            self._start_service(dep.id, req)
        else:
            self._dep_queue.setdefault(dep.id, []).append(req.id)

    def _start_service(self, dep_id: str, req: _Request) -> None:
        visit = req.trace.visits[-1]
        visit.start = self.clock
        self._dep_busy[dep_id] = req.id
        demand = req.app.vnf(visit.vnf).service_demand
        self._push(self.clock + demand, "service_complete", (dep_id, req.id))

    def _on_service_complete(self, dep_id: str, rid: int) -> Optional[str]:
        if self._dep_busy.get(dep_id) != rid:
            return None
        req = self._inflight.get(rid)
        self._dep_busy[dep_id] = None
        queue = self._dep_queue.get(dep_id, [])
        while queue:
            nxt = queue.pop(0)
            nreq = self._inflight.get(nxt)
            if nreq is not None and not nreq.done:
                self._start_service(dep_id, nreq)
                break
        if req is None or req.done:
            return None
        visit = req.trace.visits[-1]
        visit.end = self.clock
        dep = self.deployments[dep_id]
        self.service_log.append(ServiceRecord(
            node=dep.node, app=req.app.name, vnf=visit.vnf, deployment=dep_id,
            request_id=rid, arrival=visit.arrival, start=visit.start,
            end=self.clock))
        req.stage += 1
        if req.stage < len(req.app.vnfs):
            self._begin_stage_leg(req)
        elif req.app.has_response_path:
            req.message_size = req.app.messages[-1].size
            self._begin_response_leg(req)
        else:
            self._complete(req)
        return f"{dep_id} req={rid}"

    def _begin_response_leg(self, req: _Request) -> None:
        """Send the response back to the user's origin node, retracing the
        forward route when nothing changed, else over a fresh shortest path."""
        req.message_size = req.app.messages[-1].size
        if (self.topology.version, self.up_epoch) == req.route_snapshot:
            path = list(reversed(req.trace.path_nodes))
            path = [n for i, n in enumerate(path) if i == 0 or n != path[i - 1]]
        else:
            path = self._route(req.node, req.origin_node)
        if path is None:
            self._lose(req, LOSS_NO_PATH)
            return
        req.leg = path
        req.leg_pos = 0
        if len(path) == 1:
            self._complete(req)
        else:
            self._start_edge(req)

    def _complete(self, req: _Request) -> None:
        req.done = True
        req.trace.completion = self.clock
        self.requests_successful += 1
        del self._inflight[req.id]
        self.traces.append(req.trace)

    def _lose(self, req: _Request, reason: str) -> None:
        req.done = True
        req.trace.completion = self.clock
        req.trace.failure = reason
        self.requests_unsuccessful += 1
        self._inflight.pop(req.id, None)
        self.traces.append(req.trace)

    # ---- users ------------------------------------------------------------

    def spawn_user(self, spec: UserSpec, pinned_tag: Optional[str] = None) -> str:
        if spec.app_ref not in self.apps:
            raise UnknownEntityError(f"unknown application {spec.app_ref!r}")
        if spec.node not in self.topology.nodes:
            raise UnknownEntityError(f"unknown node {spec.node!r}")
        if spec.node in self.node_down:
            raise EngineError(f"node unavailable: {spec.node!r} is down")
        app = self.apps[spec.app_ref]
        if spec.first_message is not None:
            if not any(m.name == spec.first_message and m.source == USER_ENDPOINT
                       for m in app.messages):
                raise EngineError(
                    f"first_message {spec.first_message!r} is not an entry message of {app.name!r}")
        self._user_counter += 1
        uid = f"user-{self._user_counter:05d}"
        user = UserState(id=uid, app_ref=spec.app_ref, node=spec.node,
                         generation=spec.generation, created_at=self.clock,
                         pinned_tag=pinned_tag)
        self.users[uid] = user
        self._push(self.clock, "request_emit", (uid,))
        if self.placement_policy == POLICY_GREEDY:
            self._greedy_attach(user)
        return uid

    def move_user(self, user_id: str, dst_node: str) -> None:
        user = self.users.get(user_id)
        if user is None:
            raise UnknownEntityError(f"unknown user {user_id!r}")
        if not user.active:
            raise EngineError(f"user {user_id!r} was removed")
        if dst_node not in self.topology.nodes:
            raise UnknownEntityError(f"unknown node {dst_node!r}")
        user.node = dst_node

    def remove_user(self, user_id: str) -> None:
        user = self.users.get(user_id)
        if user is None:
            raise UnknownEntityError(f"unknown user {user_id!r}")
        if not user.active:
            self.warnings.append(f"remove_user: {user_id} already removed")
            return
        user.active = False
        if self.placement_policy == POLICY_GREEDY:
            for dep_id in self._policy_chains.pop(user_id, []):
                dep = self.deployments.get(dep_id)
                if dep is not None and dep.active:
                    dep.active = False

    def active_users(self) -> list[UserState]:
        return [u for u in self.users.values() if u.active]

    def user_distribution(self) -> dict[str, int]:
        dist: dict[str, int] = {}
        for u in self.active_users():
            dist[u.node] = dist.get(u.node, 0) + 1
        return dist

    # ---- deployments ------------------------------------------------------

    def capacity_used(self, node_id: str) -> dict[str, Fraction]:
        used: dict[str, Fraction] = {}
        for d in self.deployments.values():
            if d.active and d.node == node_id:
                for res, amount in self.apps[d.app].vnf(d.vnf).footprint.items():
                    used[res] = used.get(res, Fraction(0)) + amount
        return used

    def _check_capacity(self, node_id: str, footprint: Mapping[str, Fraction]) -> None:
        capacity = self.topology.nodes[node_id].capacity
        used = self.capacity_used(node_id)
        for res, amount in footprint.items():
            if amount <= 0:
                continue
            available = capacity.get(res, Fraction(0)) - used.get(res, Fraction(0))
            if amount > available:
                raise CapacityError(
                    f"insufficient capacity on {node_id!r}: {res} needs {amount}, has {available}")

    def deploy_vnf(self, app: str, vnf: str, node: str,
                   chain_tag: Optional[str] = None) -> str:
        if app not in self.apps:
            raise UnknownEntityError(f"unknown application {app!r}")
        vnf_spec = self.apps[app].vnf(vnf)
        if node not in self.topology.nodes:
            raise UnknownEntityError(f"unknown node {node!r}")
        if node in self.node_down:
            raise EngineError(f"node unavailable: {node!r} is down")
        self._check_capacity(node, vnf_spec.footprint)
        self._dep_counter += 1
        dep_id = f"dep-{self._dep_counter:05d}"
        self.deployments[dep_id] = Deployment(id=dep_id, app=app, vnf=vnf,
                                              node=node, created_at=self.clock,
                                              chain_tag=chain_tag)
        self._invalidate_routes()
        return dep_id

    replicate_vnf = deploy_vnf

    def move_vnf(self, dep_id: str, dst_node: str) -> str:
        dep = self.deployments.get(dep_id)
        if dep is None:
            raise UnknownEntityError(f"unknown deployment {dep_id!r}")
        if not dep.active:
            raise EngineError(f"deployment {dep_id!r} was removed")
        if dep.node == dst_node:
            raise EngineError(f"deployment {dep_id!r} already on {dst_node!r}")
        new_id = self.deploy_vnf(dep.app, dep.vnf, dst_node, chain_tag=dep.chain_tag)
        # In-flight and queued work drains at the old node; only new routing
        # sees the replacement.
        dep.active = False
        for chain in self._policy_chains.values():
            if dep_id in chain:
                chain[chain.index(dep_id)] = new_id
        return new_id

    def remove_vnf(self, dep_id: str) -> None:
        dep = self.deployments.get(dep_id)
        if dep is None:
            raise UnknownEntityError(f"unknown deployment {dep_id!r}")
        if not dep.active:
            raise EngineError(f"deployment {dep_id!r} was removed")
        dep.active = False
        remaining = [d for d in self.deployments.values()
                     if d.active and d.app == dep.app and d.vnf == dep.vnf]
        if not remaining:
            self.warnings.append(
                f"remove_vnf: {dep_id} was the last deployment of {dep.app}/{dep.vnf}; "
                f"subsequent requests will fail with '{LOSS_MISSING_STAGE}'")
        self._invalidate_routes()

    def active_deployments(self) -> list[Deployment]:
        return [d for d in self.deployments.values() if d.active]

    # ---- placement policy hooks --------------------------------------------

    def set_placement_policy(self, name: Optional[str]) -> None:
        if name not in (None, POLICY_GREEDY):
            raise EngineError(f"unknown placement policy {name!r}")
        self.placement_policy = name
        if name == POLICY_GREEDY:
            for user in sorted(self.active_users(), key=lambda u: u.id):
                if user.id not in self._policy_chains:
                    self._greedy_attach(user)

    def _greedy_attach(self, user: UserState) -> None:
        """Dedicated unshared chain on the user's own node; spill to the
        nearest feasible node only when capacity runs out."""
        app = self.apps[user.app_ref]
        chain: list[str] = []
        for vnf in app.vnfs:
            node = self._greedy_node_for(user.node, vnf.footprint)
            chain.append(self.deploy_vnf(app.name, vnf.name, node,
                                         chain_tag=user.id))
        self._policy_chains[user.id] = chain
        user.pinned_tag = user.id

    def _greedy_node_for(self, preferred: str, footprint: Mapping[str, Fraction]) -> str:
        def fits(nid: str) -> bool:
            try:
                self._check_capacity(nid, footprint)
                return True
            except CapacityError:
                return False

        if preferred not in self.node_down and fits(preferred):
            return preferred
        home_region = self.topology.region_of_node(preferred)
        scored = []
        for nid in self.topology.node_ids():
            if nid in self.node_down or not fits(nid):
                continue
            path = self._route(preferred, nid)
            if path is None:
                continue
            hops = len(path) - 1
            cost = self.topology.nodes[nid].cost
            penalty = Fraction(0) if self.topology.region_of_node(nid) == home_region else Fraction(25)
            scored.append((hops + 20 * cost + penalty, nid))
        if not scored:
            raise CapacityError(f"no node can host footprint near {preferred!r}")
        return min(scored)[1]

    # ---- processes ---------------------------------------------------------

    def register_process(self, spec: ProcessSpec) -> None:
        if spec.name in self.processes:
            raise EngineError(f"process {spec.name!r} already registered")
        self._validate_process(spec)
        self.processes[spec.name] = spec
        self._process_state[spec.name] = {"occurrences": 0}
        if not spec.enabled:
            return
        if spec.kind == "hotspot_users":
            times = [frac(t) for t in spec.params["times"]]
            state = self._process_state[spec.name]
            state["times"] = times
            state["created"] = []
            state["step"] = 0
            for i, t in enumerate(times):
                if t >= self.clock:
                    self._push(t, "process_tick", (spec.name, i))
                    break
        else:
            interval = spec.distribution.sample(self.process_rng)
            self._push(self.clock + interval, "process_tick", (spec.name, 0))

    def _validate_process(self, spec: ProcessSpec) -> None:
        p = spec.params
        if spec.kind == "user_mobility_random":
            app = p.get("app_ref")
            if app not in self.apps:
                raise EngineError(f"process {spec.name}: unknown app_ref {app!r}")
            for node in p.get("nodes", []):
                if node not in self.topology.nodes:
                    raise EngineError(f"process {spec.name}: unknown node {node!r}")
            if frac(p.get("create_probability", 0)) > 0 and "generation" not in p:
                raise EngineError(
                    f"process {spec.name}: 'generation' required when create_probability > 0")
        elif spec.kind == "hotspot_users":
            for key in ("app_ref", "node", "times", "count"):
                if key not in p:
                    raise EngineError(f"process {spec.name}: '{key}' is required")
            if p["app_ref"] not in self.apps:
                raise EngineError(f"process {spec.name}: unknown app_ref {p['app_ref']!r}")
            for node_key in ("node", "neighbor_node"):
                node = p.get(node_key)
                if node is not None and node not in self.topology.nodes:
                    raise EngineError(f"process {spec.name}: unknown node {node!r}")
            times = [frac(t) for t in p["times"]]
            if any(b <= a for a, b in zip(times, times[1:])):
                raise EngineError(f"process {spec.name}: 'times' must be strictly increasing")
            if "generation" not in p:
                raise EngineError(f"process {spec.name}: 'generation' is required")
        elif spec.kind in ("node_failure", "node_recovery"):
            nodes = p.get("nodes") or ([p["node"]] if "node" in p else [])
            if not nodes:
                raise EngineError(f"process {spec.name}: 'node' or 'nodes' is required")
            for node in nodes:
                if node not in self.topology.nodes:
                    raise EngineError(f"process {spec.name}: unknown node {node!r}")

    def _on_process_tick(self, name: str, occurrence: int) -> Optional[str]:
        spec = self.processes.get(name)
        if spec is None or not spec.enabled:
            return None
        state = self._process_state[name]
        state["occurrences"] += 1
        if spec.kind == "hotspot_users":
            summary = self._tick_hotspot(spec, state, occurrence)
            times = state["times"]
            if occurrence + 1 < len(times):
                self._push(times[occurrence + 1], "process_tick",
                           (name, occurrence + 1))
            return summary
        interval = spec.distribution.sample(self.process_rng)
        self._push(self.clock + interval, "process_tick", (name, occurrence + 1))
        if spec.kind == "user_mobility_random":
            return self._tick_mobility(spec)
        if spec.kind == "node_failure":
            return self._tick_failure(spec, down=True)
        if spec.kind == "node_recovery":
            return self._tick_failure(spec, down=False)
        handler = self.custom_handlers.get(spec.params.get("handler", spec.name))
        if handler is not None:
            handler(self, spec)
            return "custom"
        self.warnings.append(f"process {name}: no handler registered, skipped")
        return "custom noop"

    def _tick_mobility(self, spec: ProcessSpec) -> str:
        p = spec.params
        create_p = frac(p.get("create_probability", 0))
        move_p = frac(p.get("move_probability", 0))
        nodes = list(p.get("nodes", []))
        draw = Fraction(self.process_rng.random())
        if draw < create_p and nodes:
            node = self.process_rng.choice(nodes)
            if node in self.node_down:
                self.warnings.append(f"process {spec.name}: create skipped, {node} is down")
                return "create skipped"
            generation = Distribution.from_document(p["generation"])
            uid = self.spawn_user(UserSpec(app_ref=p["app_ref"], node=node,
                                           generation=generation))
            return f"create {uid}@{node}"
        if draw < create_p + move_p:
            users = sorted(u.id for u in self.active_users()
                           if u.app_ref == p["app_ref"])
            if not users or not nodes:
                self.warnings.append(f"process {spec.name}: move skipped, nothing to move")
                return "move skipped"
            uid = self.process_rng.choice(users)
            node = self.process_rng.choice(nodes)
            self.move_user(uid, node)
            return f"move {uid}->{node}"
        return "noop"

    def _tick_hotspot(self, spec: ProcessSpec, state: dict, step: int) -> str:
        p = spec.params
        if step == 0:
            generation = Distribution.from_document(p["generation"])
            count = int(p["count"])
            created = []
            for _ in range(count):
                uid = self.spawn_user(UserSpec(app_ref=p["app_ref"], node=p["node"],
                                               generation=generation))
                created.append(uid)
            state["created"] = created
            return f"create {count}@{p['node']}"
        if step == 1:
            neighbor = p.get("neighbor_node")
            moved = 0
            for uid in state.get("created", []):
                user = self.users.get(uid)
                if user is not None and user.active and neighbor:
                    self.move_user(uid, neighbor)
                    moved += 1
            return f"relocate {moved}->{neighbor}"
        if step == 2:
            fraction = frac(p.get("remove_fraction", "0.4"))
            created = state.get("created", [])
            n_remove = math.ceil(fraction * len(created))
            removed = 0
            for uid in sorted(created)[:n_remove]:
                user = self.users.get(uid)
                if user is not None and user.active:
                    self.remove_user(uid)
                    removed += 1
            return f"remove {removed}"
        return "noop"

    def _tick_failure(self, spec: ProcessSpec, down: bool) -> str:
        p = spec.params
        nodes = p.get("nodes") or [p["node"]]
        probability = frac(p.get("probability", 1))
        touched = []
        for node in nodes:
            if probability < 1 and Fraction(self.process_rng.random()) >= probability:
                continue
            if down:
                self.fail_node(node)
            else:
                self.recover_node(node)
            touched.append(node)
        verb = "down" if down else "up"
        return f"{verb} {','.join(touched) if touched else '-'}"

    # ---- node failure ------------------------------------------------------

    def fail_node(self, node_id: str) -> None:
        if node_id not in self.topology.nodes:
            raise UnknownEntityError(f"unknown node {node_id!r}")
        if node_id in self.node_down:
            return
        self.node_down.add(node_id)
        self.up_epoch += 1
        self._invalidate_routes()
        # Work sitting on the failed node is lost; in-transit messages bounce
        # on arrival instead.
        for dep in self.deployments.values():
            if dep.node != node_id:
                continue
            rid = self._dep_busy.get(dep.id)
            if rid is not None:
                req = self._inflight.get(rid)
                if req is not None and not req.done:
                    self._lose(req, LOSS_NODE_FAILURE)
                self._dep_busy[dep.id] = None
            for qrid in self._dep_queue.pop(dep.id, []):
                req = self._inflight.get(qrid)
                if req is not None and not req.done:
                    self._lose(req, LOSS_NODE_FAILURE)

    def recover_node(self, node_id: str) -> None:
        if node_id not in self.topology.nodes:
            raise UnknownEntityError(f"unknown node {node_id!r}")
        if node_id not in self.node_down:
            return
        self.node_down.discard(node_id)
        self.up_epoch += 1
        self._invalidate_routes()

    def add_application(self, app: Application) -> None:
        if app.name in self.apps:
            raise EngineError(f"application {app.name!r} already exists")
        self.apps[app.name] = app

    def reseed(self, seed: Any) -> None:
        """Replace the RNG streams; used when a fork should diverge."""
        self.seed = seed
        self.workload_rng = self._stream("workload")
        self.process_rng = self._stream("process")
        self.placement_rng = self._stream("placement")

    # ---- topology mutation --------------------------------------------------

    def apply_topology_change(self, change: Mapping[str, Any]) -> None:
        occupied = {d.node for d in self.active_deployments()}
        occupied |= {u.node for u in self.active_users()}
        self.topology = mutate_topology(self.topology, change, occupied_nodes=occupied)
        self.node_down &= set(self.topology.nodes)
        self._invalidate_routes()

    # ---- introspection -------------------------------------------------------

    def snapshot_runtime(self) -> dict:
        unreachable = sum(
            1 for key in self.topology.link_by_key
            if any(ep in self.node_down for ep in key.split("|")))
        return {
            "clock": jsonable(self.clock),
            "users": len(self.active_users()),
            "deployments": len(self.active_deployments()),
            "in_flight": len(self._inflight),
            "requests_total": self.requests_total,
            "requests_successful": self.requests_successful,
            "requests_unsuccessful": self.requests_unsuccessful,
            "down_nodes": sorted(self.node_down),
            "unreachable_links": unreachable,
        }

    def check_conservation(self) -> bool:
        return (self.requests_total ==
                self.requests_successful + self.requests_unsuccessful
                + len(self._inflight))

    def digest(self) -> str:
        """Deterministic hash of everything observable: executed events,
        traces, transmissions, services, and counters."""
        body = dumps_canonical({
            "events": [list(e) for e in self.event_log],
            "traces": [t.to_record() for t in self.traces],
            "transmissions": [t.to_record() for t in self.transmissions],
            "services": [s.to_record() for s in self.service_log],
            "counters": [self.requests_total, self.requests_successful,
                         self.requests_unsuccessful],
        })
        return hashlib.sha256(body.encode()).hexdigest()

    def fork_state(self) -> "Engine":
        return copy.deepcopy(self)
