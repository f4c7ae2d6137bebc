"""Infrastructure graph: regions group clusters, clusters group nodes, links join clusters.

Topology values are immutable once validated. Mutation returns a fresh value
with a bumped version; the engine treats a version change as the signal to
drop its routing cache. Nodes inside a cluster are fully connected by
implicit intra-cluster edges (distance 0, configurable latency/bandwidth);
inter-cluster links attach at each cluster's first control-plane node.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping, Optional

from .rationals import frac, quantity_jsonable

ROLE_CONTROL_PLANE = "control-plane"
ROLE_WORKER = "worker"
NODE_ROLES = (ROLE_CONTROL_PLANE, ROLE_WORKER)

DEFAULT_INTRA_LATENCY = Fraction(1)


class TopologyError(ValueError):
    """Raised for schema violations, duplicate names, or dangling references."""


def _parse_quantity(field_name: str, raw: Any) -> Fraction:
    """Capacity values may be numbers or strings; a trailing "m" means
    milli-units of the canonical scale (so "100000m" is 100 units)."""
    try:
        if isinstance(raw, str) and raw.endswith("m"):
            return frac(raw[:-1]) / 1000
        return frac(raw)
    except (ValueError, TypeError, ZeroDivisionError):
        raise TopologyError(f"{field_name}: cannot parse quantity {raw!r}") from None


@dataclass(frozen=True)
class NodeSpec:
    name: str
    role: str
    capacity: Mapping[str, Fraction]
    cost: Fraction
    capacity_raw: Mapping[str, Any]

    @staticmethod
    def from_document(doc: Mapping[str, Any], where: str) -> "NodeSpec":
        if not isinstance(doc, Mapping):
            raise TopologyError(f"{where}: node entry must be an object")
        name = doc.get("name")
        if not name or not isinstance(name, str):
            raise TopologyError(f"{where}: node 'name' is required")
        role = doc.get("role", ROLE_WORKER)
        if role not in NODE_ROLES:
            raise TopologyError(f"{where}.{name}: node 'role' must be one of {NODE_ROLES}")
        raw_capacity = doc.get("capacity")
        if not isinstance(raw_capacity, Mapping) or not raw_capacity:
            raise TopologyError(f"{where}.{name}: node 'capacity' map is required")
        capacity = {}
        for res, raw in raw_capacity.items():
            q = _parse_quantity(f"{where}.{name}.capacity.{res}", raw)
            if q <= 0:
                raise TopologyError(f"{where}.{name}.capacity.{res}: must be > 0, got {raw!r}")
            capacity[res] = q
        cost = _parse_quantity(f"{where}.{name}.cost", doc.get("cost", 0))
        if cost < 0:
            raise TopologyError(f"{where}.{name}.cost: must be >= 0")
        return NodeSpec(name=name, role=role, capacity=capacity, cost=cost,
                        capacity_raw=dict(raw_capacity))

    def to_document(self) -> dict:
        doc: dict[str, Any] = {"name": self.name, "role": self.role,
                               "capacity": dict(self.capacity_raw)}
        if self.cost:
            doc["cost"] = quantity_jsonable(self.cost)
        return doc


@dataclass(frozen=True)
class ClusterSpec:
    name: str
    role: str
    region: str
    nodes: tuple[NodeSpec, ...]

    @staticmethod
    def from_document(doc: Mapping[str, Any]) -> "ClusterSpec":
        if not isinstance(doc, Mapping):
            raise TopologyError("cluster entry must be an object")
        name = doc.get("name")
        if not name or not isinstance(name, str):
            raise TopologyError("cluster 'name' is required")
        region = doc.get("region")
        if not region or not isinstance(region, str):
            raise TopologyError(f"cluster {name}: 'region' is required")
        role = doc.get("role", "")
        nodes_doc = doc.get("nodes")
        if not isinstance(nodes_doc, list) or not nodes_doc:
            raise TopologyError(f"cluster {name}: at least one node required")
        nodes = tuple(NodeSpec.from_document(n, f"cluster {name}") for n in nodes_doc)
        seen = set()
        for n in nodes:
            if n.name in seen:
                raise TopologyError(f"cluster {name}: duplicate node name {n.name!r}")
            seen.add(n.name)
        return ClusterSpec(name=name, role=role, region=region, nodes=nodes)

    def to_document(self) -> dict:
        return {"name": self.name, "role": self.role, "region": self.region,
                "nodes": [n.to_document() for n in self.nodes]}


@dataclass(frozen=True)
class LinkSpec:
    endpoints: tuple[str, str]
    distance_km: Fraction
    target_latency: Fraction
    bandwidth: Fraction

    @staticmethod
    def from_document(doc: Mapping[str, Any]) -> "LinkSpec":
        if not isinstance(doc, Mapping):
            raise TopologyError("link entry must be an object")
        eps = doc.get("endpoints")
        if not isinstance(eps, (list, tuple)) or len(eps) != 2:
            raise TopologyError("link 'endpoints' must list exactly two clusters")
        a, b = eps
        if a == b:
            raise TopologyError(f"link endpoints must be distinct clusters, got {a!r} twice")
        distance = _parse_quantity("link.distance_km", doc.get("distance_km", 0))
        if distance < 0:
            raise TopologyError("link.distance_km: must be >= 0")
        latency = _parse_quantity("link.target_latency", doc.get("target_latency", 0))
        if latency < 0:
            raise TopologyError("link.target_latency: must be >= 0")
        bandwidth = _parse_quantity("link.bandwidth", doc.get("bandwidth", 0))
        if bandwidth <= 0:
            raise TopologyError(f"link {a}-{b}: bandwidth must be > 0")
        return LinkSpec(endpoints=(a, b), distance_km=distance,
                        target_latency=latency, bandwidth=bandwidth)

    def to_document(self) -> dict:
        return {"endpoints": list(self.endpoints),
                "distance_km": quantity_jsonable(self.distance_km),
                "target_latency": quantity_jsonable(self.target_latency),
                "bandwidth": quantity_jsonable(self.bandwidth)}


@dataclass(frozen=True)
class Edge:
    """One node-level edge of the expanded graph."""
    key: str
    kind: str  # "intra" or "inter"
    latency: Fraction
    bandwidth: Fraction
    distance: Fraction


def global_node_id(cluster_name: str, node_name: str) -> str:
    """Node names that already carry the cluster prefix stay as-is; bare
    names get prefixed so ids are globally unique."""
    if node_name.startswith(cluster_name + "-"):
        return node_name
    return f"{cluster_name}-{node_name}"


def edge_key(a: str, b: str) -> str:
    return f"{a}|{b}" if a <= b else f"{b}|{a}"


@dataclass(frozen=True)
class Topology:
    clusters: tuple[ClusterSpec, ...]
    links: tuple[LinkSpec, ...]
    intra_latency: Fraction = DEFAULT_INTRA_LATENCY
    intra_bandwidth: Optional[Fraction] = None
    version: int = 0
    # derived indexes, filled in __post_init__
    nodes: Mapping[str, NodeSpec] = field(default=None, compare=False, repr=False)
    cluster_of: Mapping[str, str] = field(default=None, compare=False, repr=False)
    adjacency: Mapping[str, Mapping[str, Edge]] = field(default=None, compare=False, repr=False)
    link_by_key: Mapping[str, LinkSpec] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        cluster_names = set()
        for c in self.clusters:
            if c.name in cluster_names:
                raise TopologyError(f"duplicate cluster name {c.name!r}")
            cluster_names.add(c.name)

        nodes: dict[str, NodeSpec] = {}
        cluster_of: dict[str, str] = {}
        for c in self.clusters:
            for n in c.nodes:
                nid = global_node_id(c.name, n.name)
                if nid in nodes:
                    raise TopologyError(f"duplicate global node id {nid!r}")
                nodes[nid] = n
                cluster_of[nid] = c.name

        seen_pairs = set()
        for link in self.links:
            a, b = link.endpoints
            for ep in (a, b):
                if ep not in cluster_names:
                    raise TopologyError(f"link references missing cluster {ep!r}")
            pair = frozenset((a, b))
            if pair in seen_pairs:
                raise TopologyError(f"more than one link between clusters {a!r} and {b!r}")
            seen_pairs.add(pair)

        intra_bw = self.intra_bandwidth
        if intra_bw is None:
            if self.links:
                intra_bw = 10 * max(l.bandwidth for l in self.links)
            else:
                intra_bw = Fraction(1000)
            object.__setattr__(self, "intra_bandwidth", intra_bw)

        adjacency: dict[str, dict[str, Edge]] = {nid: {} for nid in nodes}
        for c in self.clusters:
            ids = sorted(global_node_id(c.name, n.name) for n in c.nodes)
            for i, u in enumerate(ids):
                for v in ids[i + 1:]:
                    e = Edge(key=edge_key(u, v), kind="intra",
                             latency=self.intra_latency, bandwidth=intra_bw,
                             distance=Fraction(0))
                    adjacency[u][v] = e
                    adjacency[v][u] = e

        attach: dict[str, str] = {}
        link_by_key: dict[str, LinkSpec] = {}
        for link in self.links:
            for ep in link.endpoints:
                if ep in attach:
                    continue
                cluster = next(c for c in self.clusters if c.name == ep)
                cps = sorted(global_node_id(ep, n.name) for n in cluster.nodes
                             if n.role == ROLE_CONTROL_PLANE)
                if not cps:
                    raise TopologyError(
                        f"cluster {ep!r} participates in a link but has no control-plane node")
                attach[ep] = cps[0]
            a, b = link.endpoints
            u, v = attach[a], attach[b]
            e = Edge(key=edge_key(u, v), kind="inter", latency=link.target_latency,
                     bandwidth=link.bandwidth, distance=link.distance_km)
            adjacency[u][v] = e
            adjacency[v][u] = e
            link_by_key[e.key] = link

        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "cluster_of", cluster_of)
        object.__setattr__(self, "adjacency", adjacency)
        object.__setattr__(self, "link_by_key", link_by_key)

    @property
    def regions(self) -> set[str]:
        return {c.region for c in self.clusters}

    def region_of_node(self, node_id: str) -> str:
        cname = self.cluster_of[node_id]
        return next(c.region for c in self.clusters if c.name == cname)

    def cluster(self, name: str) -> ClusterSpec:
        for c in self.clusters:
            if c.name == name:
                return c
        raise TopologyError(f"unknown cluster {name!r}")

    def node_ids(self) -> list[str]:
        return sorted(self.nodes)

    def to_document(self) -> dict:
        return {"clusters": [c.to_document() for c in self.clusters],
                "links": [l.to_document() for l in self.links]}


def load_topology(document: Mapping[str, Any] | str,
                  intra_latency: Any = DEFAULT_INTRA_LATENCY,
                  intra_bandwidth: Any = None) -> Topology:
    """Validate a topology document and build the node-level graph.

    The document follows the scenario schema: ``clusters[]`` with name/role/
    region/nodes and optional ``links[]`` with endpoints, distance_km,
    target_latency, and bandwidth.
    """
    if isinstance(document, str):
        from .rationals import loads_exact
        document = loads_exact(document)
    if not isinstance(document, Mapping):
        raise TopologyError("topology document must be an object")
    clusters_doc = document.get("clusters")
    if not isinstance(clusters_doc, list) or not clusters_doc:
        raise TopologyError("at least one cluster required")
    clusters = tuple(ClusterSpec.from_document(c) for c in clusters_doc)
    links_doc = document.get("links", [])
    if not isinstance(links_doc, list):
        raise TopologyError("'links' must be a list")
    links = tuple(LinkSpec.from_document(l) for l in links_doc)
    return Topology(clusters=clusters, links=links,
                    intra_latency=frac(intra_latency),
                    intra_bandwidth=None if intra_bandwidth is None else frac(intra_bandwidth))


def shortest_path(topology: Topology, src: str, dst: str,
                  blocked: frozenset[str] | set[str] = frozenset()) -> Optional[list[str]]:
    """Minimal-hop path on the expanded node graph, or None when unreachable.

    Ties break by total edge latency, then by lexicographic path order, so
    the result is unique and stable. ``blocked`` nodes are skipped entirely
    (both as endpoints and as transit).
    """
    for n in (src, dst):
        if n not in topology.nodes:
            raise TopologyError(f"unknown node {n!r}")
    if src in blocked or dst in blocked:
        return None
    if src == dst:
        return [src]
    # Dijkstra over the composite key (hops, latency, path); the path tuple
    # tie-break is prefix-monotone for equal hop counts, so label-setting
    # is sound and the first pop of a node carries its minimal key.
    settled: set[str] = set()
    heap: list[tuple[int, Fraction, tuple[str, ...]]] = [(0, Fraction(0), (src,))]
    while heap:
        hops, lat, path = heapq.heappop(heap)
        node = path[-1]
        if node in settled:
            continue
        settled.add(node)
        if node == dst:
            return list(path)
        for nxt in sorted(topology.adjacency[node]):
            if nxt in blocked or nxt in settled:
                continue
            e = topology.adjacency[node][nxt]
            heapq.heappush(heap, (hops + 1, lat + e.latency, path + (nxt,)))
    return None


def path_latency(topology: Topology, path: Iterable[str]) -> Fraction:
    """Sum of per-edge target latencies along a node path (propagation only)."""
    path = list(path)
    total = Fraction(0)
    for u, v in zip(path, path[1:]):
        e = topology.adjacency.get(u, {}).get(v)
        if e is None:
            raise TopologyError(f"nodes {u!r} and {v!r} are not adjacent")
        total += e.latency
    return total


def path_distance(topology: Topology, path: Iterable[str]) -> Fraction:
    path = list(path)
    total = Fraction(0)
    for u, v in zip(path, path[1:]):
        e = topology.adjacency.get(u, {}).get(v)
        if e is None:
            raise TopologyError(f"nodes {u!r} and {v!r} are not adjacent")
        total += e.distance
    return total


def mutate_topology(topology: Topology, change: Mapping[str, Any],
                    occupied_nodes: Iterable[str] = ()) -> Topology:
    """Apply one change and return a new validated Topology (version + 1).

    ``occupied_nodes`` are nodes currently hosting deployments; removing one
    is rejected so the engine can migrate first. The version bump is the
    routing-cache invalidation signal.
    """
    op = change.get("op")
    occupied = set(occupied_nodes)
    clusters = list(topology.clusters)
    links = list(topology.links)

    if op == "add_node":
        cname = change.get("cluster")
        idx = next((i for i, c in enumerate(clusters) if c.name == cname), None)
        if idx is None:
            raise TopologyError(f"add_node: unknown cluster {cname!r}")
        node = NodeSpec.from_document(change.get("node", {}), f"cluster {cname}")
        c = clusters[idx]
        if any(n.name == node.name for n in c.nodes):
            raise TopologyError(f"add_node: node {node.name!r} already exists in {cname!r}")
        clusters[idx] = ClusterSpec(name=c.name, role=c.role, region=c.region,
                                    nodes=c.nodes + (node,))
    elif op == "remove_node":
        nid = change.get("node")
        if nid not in topology.nodes:
            raise TopologyError(f"remove_node: unknown node {nid!r}")
        if nid in occupied:
            raise TopologyError(f"remove_node: node {nid!r} is occupied; migrate or remove its deployments and users first")
        cname = topology.cluster_of[nid]
        idx = next(i for i, c in enumerate(clusters) if c.name == cname)
        c = clusters[idx]
        kept = tuple(n for n in c.nodes if global_node_id(cname, n.name) != nid)
        if not kept:
            raise TopologyError(f"remove_node: cluster {cname!r} would become empty; remove the cluster instead")
        clusters[idx] = ClusterSpec(name=c.name, role=c.role, region=c.region, nodes=kept)
    elif op == "add_cluster":
        cluster = ClusterSpec.from_document(change.get("cluster", {}))
        if any(c.name == cluster.name for c in clusters):
            raise TopologyError(f"add_cluster: cluster {cluster.name!r} already exists")
        clusters.append(cluster)
        for link_doc in change.get("links", []):
            links.append(LinkSpec.from_document(link_doc))
    elif op == "remove_cluster":
        cname = change.get("cluster")
        idx = next((i for i, c in enumerate(clusters) if c.name == cname), None)
        if idx is None:
            raise TopologyError(f"remove_cluster: unknown cluster {cname!r}")
        doomed = {global_node_id(cname, n.name) for n in clusters[idx].nodes}
        if doomed & occupied:
            raise TopologyError(f"remove_cluster: cluster {cname!r} has occupied nodes")
        if len(clusters) == 1:
            raise TopologyError("remove_cluster: at least one cluster required")
        del clusters[idx]
        links = [l for l in links if cname not in l.endpoints]
    elif op == "set_link_attribute":
        eps = change.get("endpoints")
        if not isinstance(eps, (list, tuple)) or len(eps) != 2:
            raise TopologyError("set_link_attribute: 'endpoints' must list two clusters")
        pair = frozenset(eps)
        idx = next((i for i, l in enumerate(links) if frozenset(l.endpoints) == pair), None)
        if idx is None:
            raise TopologyError(f"set_link_attribute: no link between {eps[0]!r} and {eps[1]!r}")
        attr = change.get("attribute")
        if attr not in ("distance_km", "target_latency", "bandwidth"):
            raise TopologyError(f"set_link_attribute: unknown attribute {attr!r}")
        doc = links[idx].to_document()
        doc[attr] = change.get("value")
        links[idx] = LinkSpec.from_document(doc)
    else:
        raise TopologyError(f"unknown topology change op {op!r}")

    return Topology(clusters=tuple(clusters), links=tuple(links),
                    intra_latency=topology.intra_latency,
                    intra_bandwidth=topology.intra_bandwidth,
                    version=topology.version + 1)
