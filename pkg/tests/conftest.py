import sys
import os

# Add project root to sys.path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import networkx as nx
import pytest

from app.core.model import Coflow, FlowRequest, make_instance
from app.core.network import build_network
from app.core.storage import load_instance

FIG1_FILE = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "app", "instances", "fig1.json")


@pytest.fixture
def fig1():
    """Triangle x, y, z with unit edges; A = {x->y: 2, x->z: 1}, B = {x->z: 1}, C = {x->y->z: 2}"""
    return load_instance(FIG1_FILE)


@pytest.fixture
def triangle():
    return build_network(["x", "y", "z"], edges=[("x", "y", 1.0), ("y", "z", 1.0), ("x", "z", 1.0)])


@pytest.fixture
def diamond():
    """Two disjoint unit routes s->a->t and s->b->t"""
    return build_network(["s", "a", "b", "t"],
                         arcs=[("s", "a", 1.0), ("a", "t", 1.0), ("s", "b", 1.0), ("b", "t", 1.0)])


@pytest.fixture
def fig2():
    """Four nodes s, a, b, d with the packet example's arcs"""
    return build_network(["s", "a", "b", "d"],
                         arcs=[("s", "a", 1.0), ("a", "d", 1.0), ("d", "b", 1.0), ("b", "a", 1.0)])


def single_flow(network, src, dst, size=1.0, release=0.0, path=None, weight=1.0, mode="paths-free"):
    flow = FlowRequest(src=src, dst=dst, size=size, release=release, path=path)
    return make_instance(network, [Coflow(weight=weight, flows=[flow])], mode)


def random_instance(rng, n_nodes=6, n_edges=8, coflows=3, width=3, mode="paths-given", unit=False):
    """Small connected undirected network with random coflows; given paths are shortest paths"""
    while True:
        graph = nx.gnm_random_graph(n_nodes, n_edges, seed=int(rng.integers(1 << 30)))
        if nx.is_connected(graph):
            break
    nodes = [f"n{v}" for v in graph.nodes]
    edges = [(f"n{u}", f"n{v}", 1.0 if unit else float(rng.integers(1, 4))) for u, v in graph.edges]
    network = build_network(nodes, edges=edges)

    groups = []
    for _ in range(int(rng.integers(1, coflows + 1))):
        flows = []
        for _ in range(int(rng.integers(1, width + 1))):
            s, d = rng.choice(len(nodes), size=2, replace=False)
            path = network.path(nx.shortest_path(network.graph, nodes[s], nodes[d])) if mode == "paths-given" else None
            flows.append(FlowRequest(src=nodes[s], dst=nodes[d], size=float(rng.integers(1, 5)),
                                     release=float(rng.integers(0, 3)), path=path))
        groups.append(Coflow(weight=float(rng.integers(1, 4)), flows=flows))
    return make_instance(network, groups, mode)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running benchmark checks")
