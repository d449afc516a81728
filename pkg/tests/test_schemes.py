import numpy as np
import pytest

from app.core.errors import SimulationError
from app.core.model import Coflow, FlowRequest, make_instance
from app.core.schemes import (SCHEMES, compare, improvement, random_walk_path, run_scheme, scheme_baseline,
                              scheme_lp_based, scheme_route_only, scheme_schedule_only)


def _free(instance):
    return make_instance(instance.network, instance.coflows, "paths-free")


def test_random_walk_covers_both_routes(diamond):
    seen = {random_walk_path(diamond, "s", "t", np.random.default_rng(seed)).nodes for seed in range(50)}
    assert seen == {("s", "a", "t"), ("s", "b", "t")}


def test_random_walk_erases_loops(triangle):
    for seed in range(30):
        path = random_walk_path(triangle, "x", "z", np.random.default_rng(seed))
        assert len(set(path.nodes)) == len(path.nodes)
        assert (path.source, path.sink) == ("x", "z")


def test_random_walk_gives_up(diamond):
    with pytest.raises(SimulationError):
        random_walk_path(diamond, "t", "s", np.random.default_rng(0), retries=3)


def test_baseline_is_seeded(fig1):
    free = _free(fig1)
    assert scheme_baseline(free, 4) == scheme_baseline(free, 4)
    plan = scheme_baseline(free, 4)
    assert sorted(plan.order) == [(0, 1), (0, 2), (1, 1), (2, 1)]


def test_given_paths_are_kept(fig1):
    for build in SCHEMES.values():
        plan = build(fig1, 0)
        assert all(plan.paths[k] == fig1.flow(k).path for k in plan.order)


def test_schedule_only_orders_by_size_over_bottleneck(fig1):
    plan = scheme_schedule_only(fig1, 0)
    assert plan.order == [(0, 2), (1, 1), (0, 1), (2, 1)]
    _, report = run_scheme(fig1, "schedule-only")
    assert report.objective == pytest.approx(8.0)


def test_route_only_balances(diamond):
    flows = [FlowRequest(src="s", dst="t", size=1.0), FlowRequest(src="s", dst="t", size=1.0)]
    instance = make_instance(diamond, [Coflow(flows=flows)])
    plan = scheme_route_only(instance)
    assert plan.paths[(0, 1)].nodes == ("s", "a", "t")
    assert plan.paths[(0, 2)].nodes == ("s", "b", "t")
    assert plan.order == [(0, 1), (0, 2)]
    _, report = run_scheme(instance, "route-only")
    assert report.objective == pytest.approx(1.0)


def test_lp_based_on_fig1(fig1):
    plan = scheme_lp_based(fig1)
    assert plan.lp_objective is not None
    _, report = run_scheme(fig1, "lp-based")
    assert report.feasible
    assert report.lower_bound == pytest.approx(report.lp_objective / (1 + 0.5436))
    assert report.lower_bound <= 7.0 <= report.objective + 1e-9


def test_lp_based_routes_free_flows(triangle):
    flows = [FlowRequest(src="x", dst="z", size=2.0), FlowRequest(src="y", dst="z", size=1.0)]
    instance = make_instance(triangle, [Coflow(flows=flows), Coflow(weight=2.0, flows=[flows[1]])])
    plan = scheme_lp_based(instance, seed=1)
    for key in plan.order:
        flow = instance.flow(key)
        assert (plan.paths[key].source, plan.paths[key].sink) == (flow.src, flow.dst)
    _, report = run_scheme(instance, "lp-based", seed=1)
    assert report.feasible
    assert report.lower_bound == pytest.approx(report.lp_objective / 2)


def test_every_scheme_runs(fig1):
    free = _free(fig1)
    for scheme in SCHEMES:
        _, report = run_scheme(free, scheme, seed=3)
        assert report.feasible
        assert report.objective > 0
        assert report.notes["scheme"] == scheme


def test_unknown_scheme(fig1):
    with pytest.raises(SimulationError):
        run_scheme(fig1, "fastest")


def test_improvement():
    assert improvement(10.0, 15.0) == pytest.approx(50.0)
    assert improvement(10.0, 8.0) == pytest.approx(-20.0)
    assert improvement(0.0, 0.0) == 0.0
    assert improvement(0.0, 1.0) == float("inf")


def test_compare(tmp_path):
    out = tmp_path / "compare.csv"
    table = compare({"lp-based": 10.0, "baseline": 22.6, "route-only": 15.0}, out=str(out))
    assert list(table["scheme"]) == ["baseline", "route-only"]
    assert list(table["improvement_pct"]) == pytest.approx([126.0, 50.0])
    assert out.exists()
    with pytest.raises(SimulationError):
        compare({"baseline": 1.0})
