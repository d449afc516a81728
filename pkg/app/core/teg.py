from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import networkx as nx

from app.core.config import settings
from app.core.errors import PacketError
from app.core.network import Arc, Network

TegNode = Tuple[str, int]
TegArc = Tuple[TegNode, TegNode]


@dataclass(frozen=True)
class TimeExpandedGraph:
    """Layered copy of a network over steps 0..T.

    Movement arcs ((u, t), (v, t+1)) copy every network arc (u, v); queue arcs
    ((v, t), (v, t+1)) let a packet wait at v for one step.
    """
    network: Network
    horizon: int
    graph: nx.DiGraph

    @property
    def movement_arcs(self) -> List[TegArc]:
        return [(a, b) for a, b, k in self.graph.edges(data="kind") if k == "move"]

    @property
    def queue_arcs(self) -> List[TegArc]:
        return [(a, b) for a, b, k in self.graph.edges(data="kind") if k == "queue"]

    def is_queue(self, arc: TegArc) -> bool:
        return self.graph.edges[arc]["kind"] == "queue"

    def base_arc(self, arc: TegArc) -> Optional[Arc]:
        """Network arc a movement copy stands for; None for queue arcs"""
        (u, _), (v, _) = arc
        return None if u == v else (u, v)

    def copies(self, arc: Arc) -> List[TegArc]:
        u, v = arc
        return [((u, t), (v, t + 1)) for t in range(self.horizon)]


def expand(network: Network, horizon: int, cap: Optional[int] = None) -> TimeExpandedGraph:
    cap = settings.PACKET_HORIZON_CAP if cap is None else cap
    if horizon < 1:
        raise PacketError(f"time-expanded horizon must be >= 1, got {horizon}")
    if horizon > cap:
        raise PacketError(f"time-expanded horizon {horizon} exceeds the cap {cap}")

    graph = nx.DiGraph()
    for t in range(horizon + 1):
        for v in network.nodes:
            graph.add_node((v, t))
    for t in range(horizon):
        for u, v in network.arc_keys():
            graph.add_edge((u, t), (v, t + 1), kind="move")
        for v in network.nodes:
            graph.add_edge((v, t), (v, t + 1), kind="queue")
    return TimeExpandedGraph(network=network, horizon=horizon, graph=nx.freeze(graph))


def arc_index(teg: TimeExpandedGraph) -> Dict[TegArc, int]:
    return {arc: n for n, arc in enumerate(sorted(teg.graph.edges))}
