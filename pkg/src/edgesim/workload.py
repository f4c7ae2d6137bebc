"""Applications as VNF chains, users as request generators, dynamic processes.

An application is an ordered chain of VNF stages plus the directed messages
that carry a request along the chain; a trailing message back to the user is
the response path. Users emit requests following a sampling distribution.
Processes (mobility, hotspot, failure/recovery) perturb the running system
on their own activation cadence.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Mapping, Optional

from .rationals import frac, quantity_jsonable

USER_ENDPOINT = "user"

PROCESS_KINDS = ("user_mobility_random", "hotspot_users", "node_failure",
                 "node_recovery", "custom")


class WorkloadError(ValueError):
    """Raised for malformed application, user, or process definitions."""


@dataclass(frozen=True)
class Distribution:
    """Inter-arrival sampler. Deterministic yields a fixed period,
    exponential draws from rate lam, uniform draws from [lo, hi)."""
    type: str
    time: Optional[Fraction] = None
    lam: Optional[Fraction] = None
    lo: Optional[Fraction] = None
    hi: Optional[Fraction] = None

    @staticmethod
    def from_document(doc: Mapping[str, Any], where: str = "distribution") -> "Distribution":
        if not isinstance(doc, Mapping):
            raise WorkloadError(f"{where}: must be an object")
        dtype = doc.get("type")
        if dtype == "deterministic":
            period = frac(doc.get("time", 0))
            if period <= 0:
                raise WorkloadError(f"{where}: deterministic 'time' must be > 0")
            return Distribution(type=dtype, time=period)
        if dtype == "exponential":
            lam = frac(doc.get("rate", 0))
            if lam <= 0:
                raise WorkloadError(f"{where}: exponential 'rate' must be > 0")
            return Distribution(type=dtype, lam=lam)
        if dtype == "uniform":
            lo = frac(doc.get("lo", 0))
            hi = frac(doc.get("hi", 0))
            if lo <= 0 or hi <= lo:
                raise WorkloadError(f"{where}: uniform requires 0 < lo < hi")
            return Distribution(type=dtype, lo=lo, hi=hi)
        raise WorkloadError(f"{where}: unknown distribution type {dtype!r}")

    def to_document(self) -> dict:
        if self.type == "deterministic":
            return {"type": "deterministic", "time": quantity_jsonable(self.time)}
        if self.type == "exponential":
            return {"type": "exponential", "rate": quantity_jsonable(self.lam)}
        return {"type": "uniform", "lo": quantity_jsonable(self.lo),
                "hi": quantity_jsonable(self.hi)}

    def sample(self, rng: random.Random) -> Fraction:
        if self.type == "deterministic":
            return self.time
        if self.type == "exponential":
            # Inverse-CDF draw; the float detour is deterministic for a
            # seeded rng, then pinned to an exact rational.
            u = rng.random()
            while u <= 0.0:
                u = rng.random()
            return frac(-math.log(u) / float(self.lam))
        u = rng.random()
        return self.lo + (self.hi - self.lo) * Fraction(u)


@dataclass(frozen=True)
class VNF:
    name: str
    service_demand: Fraction
    footprint: Mapping[str, Fraction]

    @staticmethod
    def from_document(doc: Mapping[str, Any], where: str) -> "VNF":
        if not isinstance(doc, Mapping):
            raise WorkloadError(f"{where}: vnf entry must be an object")
        name = doc.get("name")
        if not name or not isinstance(name, str):
            raise WorkloadError(f"{where}: vnf 'name' is required")
        demand = frac(doc.get("service_demand", 0))
        if demand <= 0:
            raise WorkloadError(f"{where}.{name}: 'service_demand' must be > 0")
        footprint = {res: frac(v) for res, v in (doc.get("footprint") or {}).items()}
        for res, v in footprint.items():
            if v < 0:
                raise WorkloadError(f"{where}.{name}.footprint.{res}: must be >= 0")
        return VNF(name=name, service_demand=demand, footprint=footprint)

    def to_document(self) -> dict:
        return {"name": self.name,
                "service_demand": quantity_jsonable(self.service_demand),
                "footprint": {res: quantity_jsonable(v) for res, v in self.footprint.items()}}


@dataclass(frozen=True)
class Message:
    name: str
    source: str
    target: str
    size: Fraction

    @staticmethod
    def from_document(doc: Mapping[str, Any], where: str) -> "Message":
        if not isinstance(doc, Mapping):
            raise WorkloadError(f"{where}: message entry must be an object")
        name = doc.get("name")
        if not name or not isinstance(name, str):
            raise WorkloadError(f"{where}: message 'name' is required")
        source = doc.get("source")
        target = doc.get("target")
        if not source or not target:
            raise WorkloadError(f"{where}.{name}: 'source' and 'target' are required")
        size = frac(doc.get("size", 0))
        if size < 0:
            raise WorkloadError(f"{where}.{name}: 'size' must be >= 0")
        return Message(name=name, source=source, target=target, size=size)

    def to_document(self) -> dict:
        return {"name": self.name, "source": self.source, "target": self.target,
                "size": quantity_jsonable(self.size)}


@dataclass(frozen=True)
class Application:
    name: str
    vnfs: tuple[VNF, ...]
    messages: tuple[Message, ...]
    latency_requirement: Fraction

    @property
    def has_response_path(self) -> bool:
        return self.messages[-1].target == USER_ENDPOINT

    @property
    def first_message(self) -> Message:
        return self.messages[0]

    def vnf(self, name: str) -> VNF:
        for v in self.vnfs:
            if v.name == name:
                return v
        raise WorkloadError(f"application {self.name}: unknown vnf {name!r}")

    @staticmethod
    def from_document(doc: Mapping[str, Any]) -> "Application":
        if not isinstance(doc, Mapping):
            raise WorkloadError("application entry must be an object")
        name = doc.get("name")
        if not name or not isinstance(name, str):
            raise WorkloadError("application 'name' is required")
        vnfs_doc = doc.get("vnfs")
        if not isinstance(vnfs_doc, list) or not vnfs_doc:
            raise WorkloadError(f"application {name}: at least one vnf required")
        vnfs = tuple(VNF.from_document(v, f"application {name}") for v in vnfs_doc)
        if len({v.name for v in vnfs}) != len(vnfs):
            raise WorkloadError(f"application {name}: duplicate vnf names")
        msgs_doc = doc.get("messages")
        if not isinstance(msgs_doc, list) or not msgs_doc:
            raise WorkloadError(f"application {name}: at least one message required")
        messages = tuple(Message.from_document(m, f"application {name}") for m in msgs_doc)
        latency = frac(doc.get("latency_requirement", 0))
        if latency <= 0:
            raise WorkloadError(f"application {name}: 'latency_requirement' must be > 0")
        app = Application(name=name, vnfs=vnfs, messages=messages,
                          latency_requirement=latency)
        _check_chain(app)
        return app

    def to_document(self) -> dict:
        return {"name": self.name,
                "latency_requirement": quantity_jsonable(self.latency_requirement),
                "vnfs": [v.to_document() for v in self.vnfs],
                "messages": [m.to_document() for m in self.messages]}


def _check_chain(app: Application) -> None:
    """Messages must walk the VNF order: user -> v1 -> ... -> vn, with an
    optional final vn -> user response. Anything else is a chain
    inconsistency."""
    n = len(app.vnfs)
    m = len(app.messages)
    if m not in (n, n + 1):
        raise WorkloadError(
            f"application {app.name}: chain inconsistency, {n} vnfs cannot carry {m} messages")
    expected: list[tuple[str, str]] = []
    prev = USER_ENDPOINT
    for v in app.vnfs:
        expected.append((prev, v.name))
        prev = v.name
    if m == n + 1:
        expected.append((prev, USER_ENDPOINT))
    for msg, (src, dst) in zip(app.messages, expected):
        if (msg.source, msg.target) != (src, dst):
            raise WorkloadError(
                f"application {app.name}: chain inconsistency, message {msg.name!r} "
                f"goes {msg.source}->{msg.target}, expected {src}->{dst}")


def load_applications(document: Mapping[str, Any] | list) -> list[Application]:
    """Parse a services document: either {"applications": [...]} or a bare list."""
    if isinstance(document, Mapping):
        entries = document.get("applications")
        if not isinstance(entries, list):
            raise WorkloadError("services document needs an 'applications' list")
    elif isinstance(document, list):
        entries = document
    else:
        raise WorkloadError("services document must be an object or a list")
    apps = [Application.from_document(e) for e in entries]
    if len({a.name for a in apps}) != len(apps):
        raise WorkloadError("duplicate application names")
    return apps


@dataclass(frozen=True)
class UserSpec:
    app_ref: str
    node: str
    generation: Distribution
    first_message: Optional[str] = None

    @staticmethod
    def from_document(doc: Mapping[str, Any]) -> "UserSpec":
        if not isinstance(doc, Mapping):
            raise WorkloadError("user entry must be an object")
        app_ref = doc.get("app_ref") or doc.get("app")
        if not app_ref:
            raise WorkloadError("user 'app_ref' is required")
        node = doc.get("node") or doc.get("location")
        if not node:
            raise WorkloadError("user 'node' is required")
        generation = Distribution.from_document(doc.get("generation", doc.get("distribution", {})),
                                                f"user on {node}")
        return UserSpec(app_ref=app_ref, node=node, generation=generation,
                        first_message=doc.get("first_message"))

    def to_document(self) -> dict:
        out = {"app_ref": self.app_ref, "node": self.node,
               "generation": self.generation.to_document()}
        if self.first_message:
            out["first_message"] = self.first_message
        return out


def load_users(document: Mapping[str, Any] | list) -> list[UserSpec]:
    if isinstance(document, Mapping):
        entries = document.get("users")
        if not isinstance(entries, list):
            raise WorkloadError("users document needs a 'users' list")
    elif isinstance(document, list):
        entries = document
    else:
        raise WorkloadError("users document must be an object or a list")
    return [UserSpec.from_document(e) for e in entries]


@dataclass(frozen=True)
class ProcessSpec:
    name: str
    kind: str
    enabled: bool
    distribution: Distribution
    params: Mapping[str, Any] = field(default_factory=dict)

    @staticmethod
    def from_document(doc: Mapping[str, Any]) -> "ProcessSpec":
        if not isinstance(doc, Mapping):
            raise WorkloadError("process entry must be an object")
        name = doc.get("name")
        if not name or not isinstance(name, str):
            raise WorkloadError("process 'name' is required")
        kind = doc.get("kind")
        if kind not in PROCESS_KINDS:
            raise WorkloadError(f"process {name}: unknown kind {kind!r}")
        distribution = Distribution.from_document(doc.get("distribution", {}),
                                                  f"process {name}")
        params = doc.get("params", {})
        if not isinstance(params, Mapping):
            raise WorkloadError(f"process {name}: 'params' must be an object")
        for key in ("create_probability", "move_probability", "probability"):
            if key in params:
                p = frac(params[key])
                if p < 0 or p > 1:
                    raise WorkloadError(f"process {name}: {key} must be within [0, 1]")
        return ProcessSpec(name=name, kind=kind, enabled=bool(doc.get("enabled", True)),
                           distribution=distribution, params=dict(params))

    def to_document(self) -> dict:
        return {"name": self.name, "kind": self.kind, "enabled": self.enabled,
                "distribution": self.distribution.to_document(),
                "params": dict(self.params)}

    def disabled_copy(self) -> "ProcessSpec":
        return replace(self, enabled=False)


def load_processes(document: Mapping[str, Any] | list) -> list[ProcessSpec]:
    if isinstance(document, Mapping):
        entries = document.get("processes")
        if not isinstance(entries, list):
            raise WorkloadError("processes document needs a 'processes' list")
    elif isinstance(document, list):
        entries = document
    else:
        raise WorkloadError("processes document must be an object or a list")
    return [ProcessSpec.from_document(e) for e in entries]
