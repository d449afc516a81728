import networkx as nx
import pytest

from app.core.errors import InstanceError
from app.core.generator import GenParams, gen_instance
from app.core.storage import save_instance


def test_shape_and_ranges():
    instance = gen_instance(GenParams(coflows=3, width=4, seed=1))
    assert len(instance.coflows) == 3
    servers = set(instance.network.servers)
    assert len(servers) == 16
    for coflow in instance.coflows:
        assert coflow.weight >= 1 and coflow.weight == int(coflow.weight)
        pairs = [(f.src, f.dst) for f in coflow.flows]
        assert len(set(pairs)) == 4
        for flow in coflow.flows:
            assert flow.src in servers and flow.dst in servers
            assert flow.size >= 1 and flow.size == int(flow.size)
            assert flow.release >= 0
            assert flow.path is None


def test_seeded():
    params = GenParams(coflows=2, width=3, seed=7)
    assert gen_instance(params) == gen_instance(params)
    assert gen_instance(params) != gen_instance(params.model_copy(update={"seed": 8}))


@pytest.mark.parametrize("mode", ["paths-given", "packet"])
def test_paths_are_shortest(mode):
    instance = gen_instance(GenParams(coflows=2, width=5, mode=mode, seed=3))
    graph = instance.network.graph
    for _, flow in instance.real_flows():
        assert flow.path is not None
        assert len(flow.path) == nx.shortest_path_length(graph, flow.src, flow.dst)
        if mode == "packet":
            assert flow.size == 1.0


def test_width_beyond_pairs(triangle):
    with pytest.raises(InstanceError):
        gen_instance(GenParams(width=7), network=triangle)
    assert len(gen_instance(GenParams(coflows=1, width=6), network=triangle).coflows[0].flows) == 6


def test_network_file(tmp_path, fig1):
    target = tmp_path / "net.json"
    target.write_text(fig1.network.to_document().model_dump_json(by_alias=True))
    instance = gen_instance(GenParams(network_file=str(target), coflows=1, width=2))
    assert instance.network == fig1.network
    save_instance(instance, tmp_path / "instance.json")
