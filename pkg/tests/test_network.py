import itertools

import networkx as nx
import numpy as np
import pytest

from app.core.errors import DecompositionError, NetworkError
from app.core.network import (EdgeFlow, Network, Path, bottleneck, build_network, decompose_flow, fat_tree,
                              thickest_paths)


def test_undirected_edges_become_two_arcs(triangle):
    assert len(triangle.arcs) == 6
    assert all(cap == 1.0 for _, _, cap in triangle.arcs)
    assert triangle.capacity("y", "x") == 1.0
    assert triangle.check_index()


@pytest.mark.parametrize("arcs", [
    [("a", "q", 1.0)],   # unknown endpoint
    [("a", "b", 0.0)],   # zero capacity
    [("a", "b", -2.0)],
    [("a", "a", 1.0)],   # self-loop
    [("a", "b", 1.0), ("a", "b", 2.0)],
])
def test_bad_declarations(arcs):
    with pytest.raises(NetworkError):
        build_network(["a", "b"], arcs=arcs)


def test_duplicate_node():
    with pytest.raises(NetworkError):
        build_network(["a", "a"])


@pytest.mark.parametrize("k, servers, switches, arcs", [(2, 2, 5, 12), (4, 16, 20, 96), (8, 128, 80, 768)])
def test_fat_tree_counts(k, servers, switches, arcs):
    net = fat_tree(k)
    roles = [net.role(n) for n in net.nodes]
    assert roles.count("server") == servers
    assert len(net.nodes) - servers == switches
    assert len(net.arcs) == arcs
    assert len(net.servers) == servers
    assert nx.is_strongly_connected(net.graph)
    for server in net.servers:
        assert set(net.servers) - {server} <= nx.descendants(net.graph, server)


def test_fat_tree_rejects_odd_arity():
    with pytest.raises(NetworkError):
        fat_tree(3)


def test_path_validation(triangle):
    path = triangle.path(["x", "y", "z"], "x", "z")
    assert len(path) == 2
    assert bottleneck(triangle, path) == 1.0
    with pytest.raises(NetworkError):
        triangle.path(["x", "y", "x"])
    with pytest.raises(NetworkError):
        triangle.path(["x", "y"], sink="z")


def test_path_serializes_as_node_list():
    path = Path(nodes=("a", "b", "c"))
    assert path.model_dump() == ["a", "b", "c"]
    assert Path.model_validate(["a", "b", "c"]) == path
    assert str(path) == "a->b->c"


def test_bottleneck_takes_thinnest_arc():
    net = build_network(["a", "b", "c"], arcs=[("a", "b", 3.0), ("b", "c", 0.5)])
    assert bottleneck(net, net.path(["a", "b", "c"])) == 0.5


def test_document_roundtrip(triangle):
    assert Network.from_document(triangle.to_document()) == triangle


def test_decompose_thickest_first(diamond):
    flow = EdgeFlow("s", "t", 1.0, {("s", "a"): 0.4, ("a", "t"): 0.4, ("s", "b"): 0.6, ("b", "t"): 0.6})
    paths = decompose_flow(diamond, flow)
    assert [p.nodes for p, _ in paths] == [("s", "b", "t"), ("s", "a", "t")]
    assert [a for _, a in paths] == pytest.approx([0.6, 0.4])


def test_decompose_drops_cycles(caplog):
    net = build_network(["s", "a", "b", "t"],
                        arcs=[("s", "a", 1.0), ("a", "t", 1.0), ("a", "b", 1.0), ("b", "a", 1.0)])
    flow = EdgeFlow("s", "t", 1.0, {("s", "a"): 1.0, ("a", "t"): 1.0, ("a", "b"): 0.3, ("b", "a"): 0.3})
    paths = decompose_flow(net, flow)
    assert len(paths) == 1
    assert paths[0][1] == pytest.approx(1.0)
    assert "cycle flow" in caplog.text


def test_decompose_rejects_broken_conservation(diamond):
    flow = EdgeFlow("s", "t", 1.0, {("s", "a"): 1.0, ("a", "t"): 0.5})
    with pytest.raises(DecompositionError):
        decompose_flow(diamond, flow)


def test_decompose_rejects_unknown_arc(diamond):
    with pytest.raises(NetworkError):
        decompose_flow(diamond, EdgeFlow("s", "t", 1.0, {("s", "t"): 1.0}))


def test_thickest_paths_accepts_any_node_type():
    flow = EdgeFlow(("s", 0), ("t", 2), 1.0, {(("s", 0), ("a", 1)): 1.0, (("a", 1), ("t", 2)): 1.0})
    assert thickest_paths(flow) == [([("s", 0), ("a", 1), ("t", 2)], 1.0)]


def _random_flow(rng, n):
    """Sum of a few random simple paths on a random DAG holding the chain v0 -> v1 -> ..."""
    nodes = [f"v{i}" for i in range(n)]
    arcs = [(nodes[i], nodes[j], 1.0) for i, j in itertools.combinations(range(n), 2)
            if j == i + 1 or rng.random() < 0.5]
    net = build_network(nodes, arcs=arcs)
    flows, value = {}, 0.0
    for _ in range(int(rng.integers(1, 5))):
        try:
            nodes_on_path = nx.shortest_path(net.graph, "v0", nodes[-1])
        except nx.NetworkXNoPath:
            return net, None
        mid = nodes[int(rng.integers(1, n - 1))]
        if nx.has_path(net.graph, "v0", mid) and nx.has_path(net.graph, mid, nodes[-1]):
            first = nx.shortest_path(net.graph, "v0", mid)
            second = nx.shortest_path(net.graph, mid, nodes[-1])
            if not set(first[:-1]) & set(second):
                nodes_on_path = first + second[1:]
        amount = float(rng.uniform(0.1, 1.0))
        value += amount
        for arc in zip(nodes_on_path, nodes_on_path[1:]):
            flows[arc] = flows.get(arc, 0.0) + amount
    return net, EdgeFlow("v0", nodes[-1], value, flows)


def test_decomposition_properties():
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(100):
        net, flow = _random_flow(rng, int(rng.integers(3, 13)))
        if flow is None:
            continue
        paths = decompose_flow(net, flow)
        positive = [a for a in flow.flows.values() if a > 0]
        assert len(paths) <= len(positive)

        rebuilt = {}
        for path, amount in paths:
            for arc in path.arcs:
                rebuilt[arc] = rebuilt.get(arc, 0.0) + amount
        for arc, amount in flow.flows.items():
            assert abs(rebuilt.get(arc, 0.0) - amount) < 1e-9
        checked += 1
    assert checked > 50


def _brute_widest(flows, source, sink):
    graph = nx.DiGraph([arc for arc, a in flows.items() if a > 1e-12])
    if source not in graph or sink not in graph:
        return 0.0
    best = 0.0
    for nodes in nx.all_simple_paths(graph, source, sink):
        best = max(best, min(flows[arc] for arc in zip(nodes, nodes[1:])))
    return best


def test_first_path_is_widest_on_small_graphs():
    rng = np.random.default_rng(11)
    for _ in range(50):
        net, flow = _random_flow(rng, int(rng.integers(3, 7)))
        if flow is None:
            continue
        paths = decompose_flow(net, flow)
        assert paths[0][1] == pytest.approx(_brute_widest(flow.flows, flow.source, flow.sink))
