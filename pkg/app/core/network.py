import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
from pydantic import BaseModel, ConfigDict, Field, model_serializer, model_validator

from app.core.errors import DecompositionError, NetworkError

logger = logging.getLogger(__name__)

Arc = Tuple[str, str]

FLOW_TOL = 1e-9


class Path(BaseModel):
    """Simple directed path, stored as its node sequence"""
    nodes: Tuple[str, ...]

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="before")
    @classmethod
    def _from_sequence(cls, data):
        if isinstance(data, (list, tuple)):
            return {"nodes": tuple(data)}
        return data

    @model_validator(mode="after")
    def _check_simple(self):
        if len(self.nodes) < 2:
            raise ValueError("a path needs at least one arc")
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError(f"path {'->'.join(self.nodes)} repeats a node")
        return self

    @model_serializer
    def _as_list(self):
        return list(self.nodes)

    @property
    def arcs(self) -> List[Arc]:
        return list(zip(self.nodes, self.nodes[1:]))

    @property
    def source(self) -> str:
        return self.nodes[0]

    @property
    def sink(self) -> str:
        return self.nodes[-1]

    def __len__(self):
        return len(self.nodes) - 1

    def __str__(self):
        return "->".join(self.nodes)


class EdgeDocument(BaseModel):
    tail: str = Field(alias="from")
    head: str = Field(alias="to")
    capacity: float
    directed: bool = False

    model_config = ConfigDict(populate_by_name=True)


class NetworkDocument(BaseModel):
    nodes: List[str]
    edges: List[EdgeDocument]
    roles: Dict[str, str] = {}


class Network:
    """Immutable directed capacitated graph.

    Wraps a frozen networkx DiGraph; every arc carries a ``capacity`` attribute
    and every node an optional ``role`` (server, edge, aggregation, core).
    """

    def __init__(self, graph: nx.DiGraph):
        self.graph = nx.freeze(graph)
        self._arcs = [(u, v, d["capacity"]) for u, v, d in graph.edges(data=True)]
        self._out = self._build_index(self._arcs)

    @staticmethod
    def _build_index(arcs) -> Dict[str, List[str]]:
        index: Dict[str, List[str]] = {}
        for u, v, _ in arcs:
            index.setdefault(u, []).append(v)
        return {u: sorted(vs) for u, vs in index.items()}

    @property
    def nodes(self) -> List[str]:
        return list(self.graph.nodes)

    @property
    def arcs(self) -> List[Tuple[str, str, float]]:
        return list(self._arcs)

    def arc_keys(self) -> List[Arc]:
        return [(u, v) for u, v, _ in self._arcs]

    def capacity(self, tail: str, head: str) -> float:
        try:
            return self.graph.edges[tail, head]["capacity"]
        except KeyError:
            raise NetworkError(f"no arc {tail}->{head}")

    def has_arc(self, tail: str, head: str) -> bool:
        return self.graph.has_edge(tail, head)

    def successors(self, node: str) -> List[str]:
        return self._out.get(node, [])

    def role(self, node: str) -> Optional[str]:
        return self.graph.nodes[node].get("role")

    @property
    def servers(self) -> List[str]:
        tagged = [n for n in self.graph.nodes if self.role(n) == "server"]
        return tagged or self.nodes

    @property
    def min_capacity(self) -> float:
        return min(c for _, _, c in self._arcs)

    def check_index(self) -> bool:
        """Rebuild the adjacency index from the arc list and compare"""
        return self._build_index(self._arcs) == self._out

    def path(self, nodes: Sequence[str], source: Optional[str] = None,
             sink: Optional[str] = None) -> Path:
        """Validate a node sequence against this graph and return it as a Path"""
        try:
            path = Path(nodes=tuple(nodes))
        except ValueError as e:
            raise NetworkError(str(e))
        for u, v in path.arcs:
            if not self.has_arc(u, v):
                raise NetworkError(f"path {path} uses missing arc {u}->{v}")
        if source is not None and path.source != source:
            raise NetworkError(f"path {path} does not start at {source}")
        if sink is not None and path.sink != sink:
            raise NetworkError(f"path {path} does not end at {sink}")
        return path

    def to_document(self) -> NetworkDocument:
        roles = {n: r for n, r in self.graph.nodes(data="role") if r}
        edges = [EdgeDocument(tail=u, head=v, capacity=c, directed=True) for u, v, c in self._arcs]
        return NetworkDocument(nodes=self.nodes, edges=edges, roles=roles)

    @classmethod
    def from_document(cls, doc: NetworkDocument) -> "Network":
        arcs = [(e.tail, e.head, e.capacity) for e in doc.edges if e.directed]
        edges = [(e.tail, e.head, e.capacity) for e in doc.edges if not e.directed]
        return build_network(doc.nodes, arcs=arcs, edges=edges, roles=doc.roles)

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (set(self.nodes) == set(other.nodes)
                and sorted(self._arcs) == sorted(other._arcs))

    def __repr__(self):
        return f"Network(nodes={len(self.nodes)}, arcs={len(self._arcs)})"


def build_network(nodes: Iterable[str], arcs: Iterable[Tuple[str, str, float]] = (),
                  edges: Iterable[Tuple[str, str, float]] = (),
                  roles: Optional[Dict[str, str]] = None) -> Network:
    """Validate node/arc declarations and build a Network.

    ``arcs`` are directed; each entry of ``edges`` is undirected and expands to two
    opposite arcs that both carry the full declared capacity.
    """
    graph = nx.DiGraph()
    for n in nodes:
        if graph.has_node(n):
            raise NetworkError(f"node {n} declared twice")
        graph.add_node(n, role=(roles or {}).get(n))

    directed = list(arcs)
    for u, v, cap in edges:
        directed.append((u, v, cap))
        directed.append((v, u, cap))

    for u, v, cap in directed:
        for endpoint in (u, v):
            if not graph.has_node(endpoint):
                raise NetworkError(f"arc {u}->{v} references unknown node {endpoint}")
        if u == v:
            raise NetworkError(f"self-loop on {u}")
        if not (cap > 0) or math.isinf(cap):
            raise NetworkError(f"arc {u}->{v} has invalid capacity {cap}")
        if graph.has_edge(u, v):
            raise NetworkError(f"duplicate arc {u}->{v}")
        graph.add_edge(u, v, capacity=float(cap))
    return Network(graph)


def fat_tree(k: int, link_capacity: float = 1.0) -> Network:
    """Standard k-ary fat tree: k^3/4 servers, 5k^2/4 switches, full-duplex links"""
    if k < 2 or k % 2:
        raise NetworkError(f"fat tree arity must be even and >= 2, got {k}")
    half = k // 2
    nodes: List[str] = []
    roles: Dict[str, str] = {}
    links: List[Tuple[str, str, float]] = []

    def add(name, role):
        nodes.append(name)
        roles[name] = role

    # 1. Core layer: (k/2)^2 switches, core (i, j) serves aggregation slot i of every pod
    for i in range(half):
        for j in range(half):
            add(f"c{i}_{j}", "core")

    # 2. Pods
    for pod in range(k):
        for a in range(half):
            add(f"a{pod}_{a}", "aggregation")
            for j in range(half):
                links.append((f"a{pod}_{a}", f"c{a}_{j}", link_capacity))
        for e in range(half):
            add(f"e{pod}_{e}", "edge")
            for a in range(half):
                links.append((f"e{pod}_{e}", f"a{pod}_{a}", link_capacity))
            for h in range(half):
                server = f"h{pod}_{e}_{h}"
                add(server, "server")
                links.append((server, f"e{pod}_{e}", link_capacity))

    return build_network(nodes, edges=links, roles=roles)


def bottleneck(network: Network, path: Path) -> float:
    if path is None or len(path.nodes) < 2:
        raise NetworkError("bottleneck of an empty path")
    return min(network.capacity(u, v) for u, v in path.arcs)


@dataclass
class EdgeFlow:
    """Single-commodity arc flow from ``source`` to ``sink`` carrying ``value``"""
    source: str
    sink: str
    value: float
    flows: Dict[Arc, float] = field(default_factory=dict)

    def imbalance(self, tol: float = FLOW_TOL) -> Dict[str, float]:
        """Nodes whose net outflow differs from what the declared value requires"""
        net: Dict[str, float] = {}
        for (u, v), amount in self.flows.items():
            if amount < -tol:
                net[u] = math.nan
                continue
            net[u] = net.get(u, 0.0) + amount
            net[v] = net.get(v, 0.0) - amount
        net[self.source] = net.get(self.source, 0.0) - self.value
        net[self.sink] = net.get(self.sink, 0.0) + self.value
        return {n: b for n, b in net.items() if math.isnan(b) or abs(b) > tol * max(1.0, self.value)}

    def check(self, tol: float = FLOW_TOL):
        bad = self.imbalance(tol)
        if bad:
            raise DecompositionError(f"flow {self.source}->{self.sink} violates conservation at {sorted(bad)}")


def _widest_path(residual: Dict[str, Dict[str, float]], source: str, sink: str) -> Optional[List[str]]:
    """Maximum-bottleneck path over arcs with positive residual flow"""
    best = {source: math.inf}
    pred: Dict[str, str] = {}
    heap = [(-math.inf, source)]
    done = set()
    while heap:
        width, node = heapq.heappop(heap)
        if node in done:
            continue
        done.add(node)
        if node == sink:
            break
        for nxt in sorted(residual.get(node, {})):
            w = min(-width, residual[node][nxt])
            if nxt not in done and w > best.get(nxt, 0.0):
                best[nxt] = w
                pred[nxt] = node
                heapq.heappush(heap, (-w, nxt))
    if sink not in done:
        return None
    nodes = [sink]
    while nodes[-1] != source:
        nodes.append(pred[nodes[-1]])
    return nodes[::-1]


def decompose_flow(network: Network, edge_flow: EdgeFlow, tol: float = FLOW_TOL) -> List[Tuple[Path, float]]:
    """Split an arc flow into source-sink paths, thickest path first.

    Whatever remains once the sink is unreachable is cycle flow; it is dropped with
    a warning carrying its mass.
    """
    for u, v in edge_flow.flows:
        network.capacity(u, v)
    return [(Path(nodes=tuple(nodes)), amount) for nodes, amount in thickest_paths(edge_flow, tol)]


def thickest_paths(edge_flow: EdgeFlow, tol: float = FLOW_TOL) -> List[Tuple[list, float]]:
    """Node-list decomposition of any hashable-node arc flow, thickest first"""
    edge_flow.check(tol)
    drop = 1e-12 * max(1.0, edge_flow.value)
    residual: Dict = {}
    for (u, v), amount in edge_flow.flows.items():
        if amount > drop:
            residual.setdefault(u, {})[v] = amount

    paths = []
    while True:
        nodes = _widest_path(residual, edge_flow.source, edge_flow.sink)
        if nodes is None:
            break
        amount = min(residual[u][v] for u, v in zip(nodes, nodes[1:]))
        for u, v in zip(nodes, nodes[1:]):
            residual[u][v] -= amount
            if residual[u][v] <= drop:
                del residual[u][v]
        paths.append((nodes, amount))

    cycle_mass = sum(a for outs in residual.values() for a in outs.values())
    if cycle_mass > tol * max(1.0, edge_flow.value):
        logger.warning("[DECOMPOSE] discarded %.3g of cycle flow for %s->%s",
                       cycle_mass, edge_flow.source, edge_flow.sink)
    return paths
