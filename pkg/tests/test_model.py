import math

import networkx as nx
import numpy as np
import pytest

from app.core.errors import InstanceError, ScheduleError
from app.core.model import (BandwidthProfile, CircuitSchedule, Coflow, FlowAllocation, FlowRequest, Segment,
                            add_dummy_flows, constify_bandwidths, evaluate, make_instance, overload_factor,
                            parse_key, peak_loads, serialize_on_path, validate)
from app.core.network import build_network

A1, A2, B, C = (0, 1), (0, 2), (1, 1), (2, 1)


def _alloc(instance, key, *segments):
    flow = instance.flow(key)
    profile = BandwidthProfile(segments=tuple(Segment(start=s, end=e, rate=r) for s, e, r in segments))
    return FlowAllocation(key=key, flow=flow, path=flow.path, profile=profile)


def _schedule(instance, plan):
    return CircuitSchedule(allocations=[_alloc(instance, key, *segs) for key, segs in plan.items()])


def _s1(fig1):
    """Every flow at half rate"""
    return _schedule(fig1, {A1: [(0, 4, 0.5)], A2: [(0, 2, 0.5)], B: [(0, 2, 0.5)], C: [(0, 4, 0.5)]})


def _s2(fig1):
    return _schedule(fig1, {A1: [(0, 2, 1)], A2: [(0, 1, 1)], B: [(1, 2, 1)], C: [(2, 4, 1)]})


def _s3(fig1):
    return _schedule(fig1, {B: [(0, 1, 1)], C: [(0, 2, 1)], A2: [(1, 2, 1)], A1: [(2, 4, 1)]})


def test_fig1_keys(fig1):
    assert [k for k, _ in fig1.real_flows()] == [A1, A2, B, C]
    assert fig1.total_volume() == 6.0
    assert fig1.max_release() == 0.0
    assert parse_key("2.1") == C


@pytest.mark.parametrize("build, objective", [(_s1, 10.0), (_s2, 8.0), (_s3, 7.0)])
def test_fig1_objectives(fig1, build, objective):
    report = evaluate(fig1, build(fig1))
    assert report.feasible
    assert report.objective == pytest.approx(objective)


def test_fig1_completions(fig1):
    report = evaluate(fig1, _s3(fig1))
    assert report.completions == {"0.1": 4.0, "0.2": 2.0, "1.1": 1.0, "2.1": 2.0}
    assert report.coflow_completions == {0: 4.0, 1: 1.0, 2: 2.0}
    assert report.makespan == 4.0


def test_peak_loads(fig1):
    peaks = peak_loads(_s1(fig1))
    assert peaks[("x", "y")] == pytest.approx(1.0)
    assert peaks[("x", "z")] == pytest.approx(1.0)
    assert peaks[("y", "z")] == pytest.approx(0.5)
    assert overload_factor(fig1.network, _s1(fig1)) == pytest.approx(1.0)


def test_capacity_violation(fig1):
    schedule = _schedule(fig1, {A1: [(0, 2, 1)], A2: [(0, 1, 1)], B: [(0, 1, 1)], C: [(2, 4, 1)]})
    verdict = validate(fig1.network, schedule)
    assert not verdict.feasible
    v = verdict.violations[0]
    assert (v.kind, v.arc, v.time) == ("capacity", "x->z", 0.0)
    assert v.amount == pytest.approx(2.0)


def test_release_and_volume_violations(triangle):
    instance = make_instance(triangle, [Coflow(flows=[FlowRequest(src="x", dst="y", size=2.0, release=1.0)])])
    path = triangle.path(["x", "y"])
    flow = instance.flow((0, 1))
    schedule = CircuitSchedule(allocations=[
        FlowAllocation(key=(0, 1), flow=flow, path=path, profile=BandwidthProfile.constant(0.0, 1.0, 1.0))])
    kinds = sorted(v.kind for v in validate(triangle, schedule).violations)
    assert kinds == ["release", "volume"]


def test_missing_allocation_never_completes(fig1):
    schedule = _s3(fig1)
    partial = CircuitSchedule(allocations=[a for a in schedule.allocations if a.key != C])
    report = evaluate(fig1, partial)
    assert math.isinf(report.completions["2.1"])
    assert not report.feasible


def test_constify_keeps_window_volume(fig1):
    schedule = _s3(fig1)
    on_xz = [a for a in schedule.allocations if a.key in (B, A2)]
    flat = constify_bandwidths(fig1.network, on_xz, 0.0, 2.0)
    for before, after in zip(on_xz, flat):
        assert after.profile.volume(0.0, 2.0) == pytest.approx(before.profile.volume(0.0, 2.0))
        assert after.profile.segments == (Segment(start=0.0, end=2.0, rate=0.5),)
    assert validate(fig1.network, CircuitSchedule(allocations=flat)).feasible


def test_constify_keeps_outside_window(fig1):
    a1 = _alloc(fig1, A1, (0, 1, 1), (1, 3, 0.5))
    flat = constify_bandwidths(fig1.network, [a1], 0.0, 2.0)[0]
    assert flat.profile.volume(2.0, 3.0) == pytest.approx(0.5)
    assert flat.profile.rate_at(1.0) == pytest.approx(0.75)
    assert flat.profile.volume() == pytest.approx(2.0)


def test_serialize_on_path(fig1):
    flat = [_alloc(fig1, B, (0, 2, 0.5)), _alloc(fig1, A2, (0, 2, 0.5))]
    serial = serialize_on_path(fig1.network, fig1.flow(B).path, flat, 0.0, 2.0)
    assert serial[0].profile.segments == (Segment(start=0.0, end=1.0, rate=1.0),)
    assert serial[1].profile.segments == (Segment(start=1.0, end=2.0, rate=1.0),)
    assert validate(fig1.network, CircuitSchedule(allocations=serial)).feasible


def test_serialize_rejects_other_path(fig1):
    with pytest.raises(ScheduleError):
        serialize_on_path(fig1.network, fig1.flow(B).path, [_alloc(fig1, C, (0, 2, 1))], 0.0, 2.0)


def test_window_checks(fig1):
    a1 = _alloc(fig1, A1, (0, 2, 1))
    with pytest.raises(ScheduleError):
        constify_bandwidths(fig1.network, [a1], 2.0, 2.0)
    assert constify_bandwidths(fig1.network, [], 0.0, 1.0) == []


def test_constify_rejects_late_release(triangle):
    instance = make_instance(triangle, [Coflow(flows=[FlowRequest(src="x", dst="y", size=1.0, release=1.0)])])
    flow = instance.flow((0, 1))
    a = FlowAllocation(key=(0, 1), flow=flow, path=triangle.path(["x", "y"]),
                       profile=BandwidthProfile.constant(1.0, 2.0, 1.0))
    with pytest.raises(ScheduleError):
        constify_bandwidths(triangle, [a], 0.0, 2.0)


def test_profile_completion_and_dilation():
    profile = BandwidthProfile(segments=(Segment(start=0, end=1, rate=1), Segment(start=2, end=4, rate=0.5)))
    assert profile.completion(1.0) == 1.0
    assert profile.completion(1.5) == pytest.approx(3.0)
    assert math.isinf(profile.completion(3.0))
    slow = profile.dilate(2.0)
    assert slow.volume() == pytest.approx(profile.volume())
    assert slow.completion(1.5) == pytest.approx(6.0)
    assert profile.shift(1.0).first_active() == 1.0


def test_profile_rejects_overlap():
    with pytest.raises(ValueError):
        BandwidthProfile(segments=(Segment(start=0, end=2, rate=1), Segment(start=1, end=3, rate=1)))


def test_schedule_dilation_scales_objective(fig1):
    slow = _s3(fig1).dilate(1.5)
    report = evaluate(fig1, slow)
    assert report.feasible
    assert report.objective == pytest.approx(7.0 * 1.5)
    assert report.stretch == 1.5


def test_add_dummy_flows(fig1):
    full = add_dummy_flows(fig1)
    assert full.has_dummies
    assert add_dummy_flows(full) is full
    dummies = [(k, f) for k, f in full.flows() if f.dummy]
    assert [k for k, _ in dummies] == [(0, 0), (1, 0), (2, 0)]
    assert all(f.size == 0 for _, f in dummies)
    assert full.flow_weight((1, 0)) == 1.0
    assert full.flow_weight(B) == 0.0
    assert [k for k, _ in full.real_flows()] == [A1, A2, B, C]


def test_instance_validation(triangle):
    flow = FlowRequest(src="x", dst="y", size=1.0)
    with pytest.raises(InstanceError):
        make_instance(triangle, [Coflow(flows=[flow])], mode="paths-given")
    with pytest.raises(InstanceError):
        make_instance(triangle, [Coflow(flows=[FlowRequest(src="x", dst="y", size=2.0)])], mode="packet")
    with pytest.raises(InstanceError):
        make_instance(triangle, [Coflow(flows=[FlowRequest(src="x", dst="q")])])
    with pytest.raises(InstanceError):
        make_instance(triangle, [Coflow(flows=[FlowRequest(src="x", dst="z", path=triangle.path(["x", "y"]))])])
    with pytest.raises(ValueError):
        FlowRequest(src="x", dst="x")


def _random_profile(rng, horizon=4.0):
    points = np.sort(rng.uniform(0.0, horizon, size=2 * int(rng.integers(1, 4))))
    return [(float(s), float(e), float(rng.uniform(0.1, 1.0))) for s, e in zip(points[::2], points[1::2])
            if e - s > 1e-6]


def _allocations(rng, network, paths, horizon=4.0):
    """Random profiles on ``paths``, scaled down until the network carries them"""
    raw = [(path, _random_profile(rng, horizon)) for path in paths]
    raw = [(path, segs) for path, segs in raw if segs]

    def build(scale):
        out = []
        for n, (path, segs) in enumerate(raw):
            profile = BandwidthProfile(segments=tuple(Segment(start=s, end=e, rate=r / scale) for s, e, r in segs))
            flow = FlowRequest(src=path.source, dst=path.sink, size=profile.volume(), path=path)
            out.append(FlowAllocation(key=(0, n + 1), flow=flow, path=path, profile=profile))
        return out

    allocations = build(1.0)
    overload = overload_factor(network, CircuitSchedule(allocations=allocations))
    return build(overload) if overload > 1.0 else allocations


def _random_dag(rng, size=6):
    nodes = [f"v{i}" for i in range(size)]
    arcs = {(nodes[i], nodes[i + 1]) for i in range(size - 1)}
    for _ in range(4):
        i, j = sorted(rng.choice(size, size=2, replace=False))
        arcs.add((nodes[i], nodes[j]))
    return build_network(nodes, arcs=[(u, v, float(rng.uniform(1.0, 3.0))) for u, v in sorted(arcs)])


def _window(rng, horizon=4.0):
    t1, t2 = sorted(rng.uniform(0.0, horizon, size=2))
    return float(t1), float(max(t2, t1 + 0.01))


def test_constify_randomized():
    rng = np.random.default_rng(11)
    for _ in range(200):
        network = _random_dag(rng)
        nodes = list(network.graph.nodes)
        paths = []
        for _ in range(int(rng.integers(1, 5))):
            i, j = sorted(rng.choice(len(nodes), size=2, replace=False))
            paths.append(network.path(nx.shortest_path(network.graph, nodes[i], nodes[j])))
        allocations = _allocations(rng, network, paths)
        if not allocations:
            continue
        t1, t2 = _window(rng)
        flat = constify_bandwidths(network, allocations, t1, t2)
        for before, after in zip(allocations, flat):
            assert after.profile.volume(t1, t2) == pytest.approx(before.profile.volume(t1, t2), abs=1e-9)
            assert after.profile.volume() == pytest.approx(before.profile.volume(), abs=1e-9)
            inside = [s for s in after.profile.segments if s.start >= t1 - 1e-12 and s.end <= t2 + 1e-12]
            assert len({s.rate for s in inside}) <= 1
        assert validate(network, CircuitSchedule(allocations=flat)).feasible


def test_serialize_randomized():
    rng = np.random.default_rng(12)
    for _ in range(200):
        size = int(rng.integers(2, 6))
        nodes = [f"v{i}" for i in range(size)]
        network = build_network(nodes, arcs=[(nodes[i], nodes[i + 1], float(rng.uniform(1.0, 3.0)))
                                             for i in range(size - 1)])
        path = network.path(nodes)
        allocations = _allocations(rng, network, [path] * int(rng.integers(1, 5)))
        if not allocations:
            continue
        t1, t2 = _window(rng)
        serial = serialize_on_path(network, path, allocations, t1, t2)

        inner = sorted((s for a in serial for s in a.profile.segments
                        if s.start >= t1 - 1e-12 and s.end <= t2 + 1e-12), key=lambda s: s.start)
        # one flow at a time, all done by t2
        for prev, seg in zip(inner, inner[1:]):
            assert seg.start >= prev.end - 1e-9
        assert all(seg.end <= t2 + 1e-9 for seg in inner)
        for before, after in zip(allocations, serial):
            assert after.profile.volume(t1, t2) == pytest.approx(before.profile.volume(t1, t2), abs=1e-9)
        assert validate(network, CircuitSchedule(allocations=serial)).feasible
