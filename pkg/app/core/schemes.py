import logging
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import networkx as nx
import numpy as np
import pandas as pd

from app.core.circuit import RoundingParams, schedule_routing
from app.core.errors import SimulationError
from app.core.lp import build_circuit_given_paths_lp, lp_horizon, make_grid
from app.core.model import CircuitSchedule, FlowKey, Instance, ScheduleReport, add_dummy_flows
from app.core.network import Network, Path, bottleneck
from app.core.simplex import solve
from app.core.simulator import PriorityPlan, simulate

logger = logging.getLogger(__name__)

WALK_RETRIES = 100


def random_walk_path(network: Network, src: str, dst: str, rng: np.random.Generator,
                     retries: int = WALK_RETRIES) -> Path:
    """Random walk from src until it hits dst, with loops erased as they close"""
    limit = 50 * len(network.nodes)
    for _ in range(retries):
        walk = [src]
        position = {src: 0}
        while walk[-1] != dst and len(walk) <= limit:
            options = network.successors(walk[-1])
            if not options:
                break
            nxt = options[int(rng.integers(len(options)))]
            if nxt in position:
                # close the loop: cut the walk back to the first visit
                cut = position[nxt]
                for node in walk[cut + 1:]:
                    del position[node]
                walk = walk[:cut + 1]
            else:
                position[nxt] = len(walk)
                walk.append(nxt)
        if walk[-1] == dst:
            return network.path(walk, src, dst)
    raise SimulationError(f"no path from {src} to {dst} after {retries} random walks")


def _fixed_or(instance: Instance, key: FlowKey, route: Callable[[], Path]) -> Path:
    flow = instance.flow(key)
    return flow.path if instance.mode == "paths-given" and flow.path is not None else route()


def _random_routes(instance: Instance, rng: np.random.Generator) -> Dict[FlowKey, Path]:
    net = instance.network
    return {key: _fixed_or(instance, key, lambda f=flow: random_walk_path(net, f.src, f.dst, rng))
            for key, flow in instance.real_flows()}


def scheme_baseline(instance: Instance, seed: int = 0) -> PriorityPlan:
    """Random routes, random order"""
    rng = np.random.default_rng(seed)
    paths = _random_routes(instance, rng)
    keys = sorted(paths)
    order = [keys[n] for n in rng.permutation(len(keys))]
    return PriorityPlan(order=order, paths=paths, scheme="baseline")


def scheme_schedule_only(instance: Instance, seed: int = 0) -> PriorityPlan:
    """Random routes, smallest size-over-bottleneck first"""
    rng = np.random.default_rng(seed)
    paths = _random_routes(instance, rng)
    net = instance.network
    order = sorted(paths, key=lambda k: (instance.flow(k).size / bottleneck(net, paths[k]), k))
    return PriorityPlan(order=order, paths=paths, scheme="schedule-only")


def scheme_route_only(instance: Instance, seed: int = 0) -> PriorityPlan:
    """Load-balanced shortest routes in input order"""
    net = instance.network
    load: Dict[Tuple[str, str], float] = {}
    paths: Dict[FlowKey, Path] = {}

    for key, flow in instance.real_flows():
        if instance.mode == "paths-given" and flow.path is not None:
            best = flow.path
        else:
            candidates = sorted(nx.all_shortest_paths(net.graph, flow.src, flow.dst))

            def peak(nodes):
                return max((load.get(arc, 0.0) + flow.size) / net.capacity(*arc)
                           for arc in zip(nodes, nodes[1:]))
            best = net.path(min(candidates, key=peak), flow.src, flow.dst)
        for arc in best.arcs:
            load[arc] = load.get(arc, 0.0) + flow.size
        paths[key] = best
    order = [k for k, _ in instance.real_flows()]
    return PriorityPlan(order=order, paths=paths, scheme="route-only")


def scheme_lp_based(instance: Instance, seed: int = 0) -> PriorityPlan:
    """Paths from the rounded LP, order by LP completion"""
    keys = [k for k, _ in instance.real_flows()]
    if instance.mode == "paths-given":
        full = add_dummy_flows(instance)
        eps = RoundingParams().epsilon
        solution = solve(build_circuit_given_paths_lp(full, make_grid("circuit", eps, lp_horizon(full, eps))))
        solution.require_optimal()
        factor = 1.0 + eps
        paths = {k: instance.flow(k).path for k in keys}
    else:
        outcome = schedule_routing(instance, seed=seed)
        solution = outcome.solution
        factor = 2.0
        paths = dict(outcome.paths)
        # zero-size flows never enter the LP rounding
        for key in keys:
            if key not in paths:
                flow = instance.flow(key)
                paths[key] = instance.network.path(nx.shortest_path(instance.network.graph, flow.src, flow.dst))

    def lp_completion(key):
        if solution is None or instance.flow(key).size == 0:
            return 0.0
        return solution.completion(key)

    order = sorted(keys, key=lambda k: (lp_completion(k), k))
    lp = solution.objective if solution is not None else None
    bound = None if lp is None else lp / factor
    return PriorityPlan(order=order, paths=paths, scheme="lp-based", lp_objective=lp, lower_bound=bound)


SCHEMES: Dict[str, Callable[[Instance, int], PriorityPlan]] = {
    "baseline": scheme_baseline,
    "schedule-only": scheme_schedule_only,
    "route-only": scheme_route_only,
    "lp-based": scheme_lp_based,
}


def run_scheme(instance: Instance, scheme: str, seed: int = 0) -> Tuple[CircuitSchedule, ScheduleReport]:
    try:
        build = SCHEMES[scheme]
    except KeyError:
        raise SimulationError(f"unknown scheme {scheme!r}; pick one of {sorted(SCHEMES)}")
    return simulate(instance, build(instance, seed))


def improvement(obj_a: float, obj_b: float) -> float:
    """Percent by which A beats B, measured against A"""
    if obj_a <= 0:
        return 0.0 if obj_b <= 0 else float("inf")
    return 100.0 * (obj_b - obj_a) / obj_a


def compare(reports: Mapping[str, ScheduleReport | float], reference: str = "lp-based",
            out: Optional[str] = None) -> pd.DataFrame:
    """Improvement of ``reference`` over every other scheme"""
    objectives = {name: (r.objective if isinstance(r, ScheduleReport) else float(r)) for name, r in reports.items()}
    if reference not in objectives:
        raise SimulationError(f"no {reference} result to compare against")
    base = objectives[reference]
    rows: List[Dict] = [{"scheme": name, "objective": obj, "improvement_pct": improvement(base, obj)}
                        for name, obj in objectives.items() if name != reference]
    table = pd.DataFrame(rows, columns=["scheme", "objective", "improvement_pct"])
    if out:
        table.to_csv(out, index=False)
    return table
