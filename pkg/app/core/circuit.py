import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.core.config import settings
from app.core.errors import ParamsError, RoundingError
from app.core.lp import (IntervalGrid, LpSolution, build_circuit_given_paths_lp, build_circuit_routing_lp,
                         lp_horizon, make_grid, var_name)
from app.core.lp_format import export_lp
from app.core.model import (BandwidthProfile, CircuitSchedule, FlowAllocation, FlowKey, Instance,
                            ScheduleReport, add_dummy_flows, evaluate, key_str, overload_factor,
                            peak_loads, validate)
from app.core.network import Arc, EdgeFlow, Network, Path, decompose_flow
from app.core.simplex import solve

logger = logging.getLogger(__name__)

MASS_TOL = 1e-7


class RoundingParams(BaseModel):
    alpha: float = Field(default_factory=lambda: settings.CIRCUIT_ALPHA, gt=0, le=1)
    displacement: int = Field(default_factory=lambda: settings.CIRCUIT_DISPLACEMENT, ge=1)
    epsilon: float = Field(default_factory=lambda: settings.CIRCUIT_EPSILON, gt=0)
    seed: int = 0
    strict: bool = False

    model_config = ConfigDict(frozen=True)


class ParamsVerdict(BaseModel):
    displacement_ok: bool
    capacity_ok: bool
    required_displacement: int
    capacity_lhs: float
    blow_up: float

    @property
    def valid(self) -> bool:
        return self.displacement_ok and self.capacity_ok


def check_params(params: RoundingParams) -> ParamsVerdict:
    """Check the displacement and capacity inequalities and report the blow-up.

    A failed displacement inequality always raises. A failed capacity inequality
    raises only in strict mode; otherwise the uniform stretch absorbs the excess.
    """
    a, d, eps = params.alpha, params.displacement, params.epsilon
    growth = 1.0 + eps
    required = math.ceil(math.log(1.0 / a, growth) - 1e-12) + 1 if a < 1 else 1
    lhs = 1.0 / (eps * growth ** (d - 1))
    blow_up = growth ** (d + 2) / (1.0 - a) if a < 1 else math.inf
    verdict = ParamsVerdict(displacement_ok=d >= required, capacity_ok=lhs <= a + 1e-12,
                            required_displacement=required, capacity_lhs=lhs, blow_up=blow_up)

    if not verdict.displacement_ok:
        raise ParamsError(f"displacement {d} below the required {required} for alpha={a}, epsilon={eps}")
    if not verdict.capacity_ok:
        if params.strict:
            raise ParamsError(f"capacity inequality fails: 1/(eps(1+eps)^(D-1)) = {lhs:.4f} > alpha = {a}")
        logger.info("[ROUND] capacity inequality fails (%.4f > %.4f); relying on stretch", lhs, a)
    return verdict


def alpha_interval(masses: Sequence[float], alpha: float, rule: Literal["inclusive", "strict"] = "inclusive") -> int:
    """Earliest interval where cumulative mass reaches ``alpha`` (inclusive) or passes it (strict)"""
    total = 0.0
    for ell, m in enumerate(masses):
        total += m
        if (rule == "inclusive" and total >= alpha - 1e-9) or (rule == "strict" and total > alpha + 1e-9):
            return ell
    return len(masses) - 1


@dataclass
class IntervalAssignment:
    intervals: Dict[FlowKey, int]
    displacement: int

    @property
    def buckets(self) -> Dict[int, List[FlowKey]]:
        """S[k]: flows whose alpha-interval is k - D"""
        out: Dict[int, List[FlowKey]] = {}
        for key in sorted(self.intervals):
            out.setdefault(self.intervals[key] + self.displacement, []).append(key)
        return out


def _check_masses(solution: LpSolution, key: FlowKey) -> List[float]:
    masses = solution.masses(key)
    if abs(sum(masses) - 1.0) > MASS_TOL:
        raise RoundingError(f"LP masses of flow {key_str(key)} sum to {sum(masses):.9f}")
    return masses


def assign_intervals(solution: LpSolution, alpha: float, displacement: int = 0,
                     keys: Optional[Sequence[FlowKey]] = None) -> IntervalAssignment:
    if keys is None:
        keys = sorted({sym.key for _, sym in solution.problem.columns("x") if sym.key[1] != 0})
    intervals = {key: alpha_interval(_check_masses(solution, key), alpha) for key in keys}
    return IntervalAssignment(intervals=intervals, displacement=displacement)


def _tau(grid: IntervalGrid, ell: int) -> float:
    """Grid boundary, extended past the grid end with the same growth"""
    if ell < len(grid.boundaries):
        return grid.boundaries[ell]
    return (1.0 + grid.epsilon) ** (ell - 1)


def _run_in_interval(grid: IntervalGrid, k: int, size: float, release: float) -> BandwidthProfile:
    start = max(_tau(grid, k), release)
    end = _tau(grid, k + 1)
    return BandwidthProfile.constant(start, end, size / (end - start))


def _finish(instance: Instance, allocations: List[FlowAllocation], label: str) -> Tuple[CircuitSchedule, float]:
    schedule = CircuitSchedule(allocations=allocations)
    overload = overload_factor(instance.network, schedule)
    stretch = max(1.0, overload)
    if stretch > 1.0:
        logger.info("[ROUND] %s: overload %.4f, stretching by %.4f", label, overload, stretch)
        schedule = schedule.dilate(stretch)
    verdict = validate(instance.network, schedule)
    if not verdict.feasible:
        raise RoundingError(f"{label} schedule fails validation: {verdict.violations[0]}")
    return schedule, overload


def _lp_notes(report: ScheduleReport, solution: LpSolution, bound_factor: float,
              extra: Optional[Dict] = None) -> ScheduleReport:
    lp = solution.objective
    notes = dict(report.notes)
    notes["lp_ratio"] = report.objective / lp if lp > 0 else (1.0 if report.objective == 0 else math.inf)
    notes.update(extra or {})
    return report.model_copy(update={"lp_objective": lp, "lower_bound": lp / bound_factor, "notes": notes})


def schedule_given_paths(instance: Instance, solution: LpSolution, params: RoundingParams,
                         grid: Optional[IntervalGrid] = None) -> Tuple[CircuitSchedule, ScheduleReport]:
    """Run each flow in the D-th interval after its alpha-interval at one constant rate"""
    verdict = check_params(params)
    if grid is None:
        grid = make_grid("circuit", params.epsilon, lp_horizon(add_dummy_flows(instance), params.epsilon))
    solution.require_optimal()
    bad = solution.problem.violations(solution.values)
    if bad:
        raise RoundingError(f"LP point violates its own row {bad[0][0]}")

    flows = [(k, f) for k, f in instance.real_flows() if f.size > 0]
    assignment = assign_intervals(solution, params.alpha, params.displacement, [k for k, _ in flows])

    allocations = []
    for key, flow in flows:
        k = assignment.intervals[key] + params.displacement
        profile = _run_in_interval(grid, k, flow.size, flow.release)
        allocations.append(FlowAllocation(key=key, flow=flow, path=flow.path, profile=profile))

    schedule, overload = _finish(instance, allocations, "given-paths")
    report = evaluate(instance, schedule)
    report = _lp_notes(report, solution, 1.0 + params.epsilon,
                       {"overload": overload, "blow_up": verdict.blow_up})
    return schedule, report


def solve_given_paths(instance: Instance, params: Optional[RoundingParams] = None,
                      lp_dump: Optional[str] = None) -> Tuple[CircuitSchedule, ScheduleReport]:
    """LP, solve, round: the whole fixed-path pipeline"""
    params = params or RoundingParams()
    if not instance.real_flows():
        return CircuitSchedule(), evaluate(instance, CircuitSchedule())
    instance = add_dummy_flows(instance)
    grid = make_grid("circuit", params.epsilon, lp_horizon(instance, params.epsilon))
    problem = build_circuit_given_paths_lp(instance, grid)
    if lp_dump:
        export_lp(problem, lp_dump)
    solution = solve(problem).require_optimal()
    return schedule_given_paths(instance, solution, params, grid)


class CongestionReport(BaseModel):
    loads: Dict[str, float] = {}
    capacities: Dict[str, float] = {}
    overload: float = 0.0
    stretch: float = 1.0
    paths_per_flow: Dict[str, int] = {}

    @classmethod
    def from_loads(cls, network: Network, loads: Dict[Arc, float],
                   paths_per_flow: Dict[str, int]) -> "CongestionReport":
        overload = max((load / network.capacity(*arc) for arc, load in loads.items()), default=0.0)
        return cls(
            loads={f"{u}->{v}": load for (u, v), load in sorted(loads.items())},
            capacities={f"{u}->{v}": network.capacity(u, v) for (u, v) in sorted(loads)},
            overload=overload,
            stretch=max(1.0, overload),
            paths_per_flow=paths_per_flow,
        )


def schedule_congestion(network: Network, schedule: CircuitSchedule) -> CongestionReport:
    """Peak load per arc of a finished circuit schedule; every flow uses one path"""
    return CongestionReport.from_loads(
        network, peak_loads(schedule),
        {key_str(a.key): 1 for a in schedule.allocations if not a.flow.dummy})


def scale_and_sum_flows(solution: LpSolution, instance: Instance, keys: Sequence[FlowKey], k: int,
                        displacement: int = 3) -> Dict[FlowKey, EdgeFlow]:
    """Per-flow arc flow: interval l contributes its rates divided by 2^(k-l-1), for l <= k - D"""
    out: Dict[FlowKey, EdgeFlow] = {}
    cols: Dict[FlowKey, List] = {}
    for col, sym in solution.problem.columns("xe"):
        cols.setdefault(sym.key, []).append((col, sym))

    for key in keys:
        flow = instance.flow(key)
        flows: Dict[Arc, float] = {}
        value = 0.0
        for ell in range(1, k - displacement + 1):
            scale = 2.0 ** (k - ell - 1)
            name = var_name("x", key, ell)
            mass = solution.value(name) if solution.problem.has_var(name) else 0.0
            # Sink inflow of interval l is sigma * x / tau_l with tau_l = 2^(l-1)
            value += flow.size * mass / 2.0 ** (ell - 1) / scale
            for col, sym in cols.get(key, []):
                if sym.interval == ell:
                    amount = float(solution.values[col]) / scale
                    if amount > 0:
                        flows[sym.arc] = flows.get(sym.arc, 0.0) + amount
        out[key] = EdgeFlow(source=flow.src, sink=flow.dst, value=value, flows=flows)
    return out


def draw_paths(amounts: Sequence[float], rng: np.random.Generator, size: Optional[int] = None):
    """Categorical draw(s) of path indices with probability proportional to ``amounts``"""
    p = np.asarray(amounts, dtype=float)
    return rng.choice(len(p), size=size, p=p / p.sum())


def choose_paths(network: Network, path_sets: Dict[FlowKey, List[Tuple[Path, float]]], seed: int,
                 demands: Optional[Dict[FlowKey, float]] = None,
                 groups: Optional[Dict[FlowKey, int]] = None) -> Tuple[Dict[FlowKey, Path], CongestionReport]:
    """Pick one path per flow at random, weighted by decomposition amounts.

    ``demands`` is the rate each flow puts on its chosen path (default: its total
    amount); flows in different ``groups`` never run at the same time, so loads
    are summed per group and the worst group counts.
    """
    rng = np.random.default_rng(seed)
    chosen: Dict[FlowKey, Path] = {}
    group_loads: Dict[Tuple[int, Arc], float] = {}

    for key in sorted(path_sets):
        options = [(p, a) for p, a in path_sets[key] if a > 0]
        if not options:
            raise RoundingError(f"flow {key_str(key)} has no path to choose from")
        idx = int(draw_paths([a for _, a in options], rng))
        path = options[idx][0]
        chosen[key] = path
        demand = demands[key] if demands is not None else sum(a for _, a in options)
        group = groups[key] if groups is not None else 0
        for arc in path.arcs:
            group_loads[(group, arc)] = group_loads.get((group, arc), 0.0) + demand

    loads: Dict[Arc, float] = {}
    for (_, arc), load in group_loads.items():
        loads[arc] = max(loads.get(arc, 0.0), load)
    report = CongestionReport.from_loads(
        network, loads, {key_str(k): len(path_sets[k]) for k in sorted(path_sets)})
    return chosen, report


@dataclass
class RoutingOutcome:
    schedule: CircuitSchedule
    report: ScheduleReport
    congestion: CongestionReport
    solution: Optional[LpSolution] = None
    paths: Dict[FlowKey, Path] = field(default_factory=dict)


ROUTING_ALPHA = 0.5
ROUTING_DISPLACEMENT = 3


def schedule_routing(instance: Instance, seed: int = 0, lp_dump: Optional[str] = None) -> RoutingOutcome:
    """Route and schedule flows without given paths.

    Routing LP with epsilon = 1, half-intervals, per-interval scaled flow sums,
    thickest-path decomposition, one random path per flow, constant rate inside
    the displaced interval, then a uniform stretch for whatever overload the
    random choice caused.
    """
    params = RoundingParams(alpha=ROUTING_ALPHA, displacement=ROUTING_DISPLACEMENT, epsilon=1.0, seed=seed)
    verdict = check_params(params)
    flows = [(k, f) for k, f in instance.real_flows() if f.size > 0]
    if not flows:
        empty = CircuitSchedule()
        return RoutingOutcome(empty, evaluate(instance, empty), CongestionReport())

    instance = add_dummy_flows(instance)
    grid = make_grid("circuit", 1.0, lp_horizon(instance, 1.0))
    problem = build_circuit_routing_lp(instance, grid)
    if lp_dump:
        export_lp(problem, lp_dump)
    solution = solve(problem).require_optimal()

    assignment = assign_intervals(solution, ROUTING_ALPHA, ROUTING_DISPLACEMENT, [k for k, _ in flows])
    path_sets: Dict[FlowKey, List[Tuple[Path, float]]] = {}
    demands: Dict[FlowKey, float] = {}
    for k, keys in assignment.buckets.items():
        for key, edge_flow in scale_and_sum_flows(solution, instance, keys, k, ROUTING_DISPLACEMENT).items():
            path_sets[key] = decompose_flow(instance.network, edge_flow, settings.LP_FEAS_TOL)
            demands[key] = instance.flow(key).size / _tau(grid, k)

    groups = {key: h + ROUTING_DISPLACEMENT for key, h in assignment.intervals.items()}
    paths, congestion = choose_paths(instance.network, path_sets, seed, demands, groups)

    allocations = []
    for key, flow in flows:
        profile = _run_in_interval(grid, groups[key], flow.size, flow.release)
        allocations.append(FlowAllocation(key=key, flow=flow, path=paths[key], profile=profile))
    schedule, overload = _finish(instance, allocations, "routing")
    congestion = congestion.model_copy(update={"stretch": schedule.stretch})

    report = evaluate(instance, schedule)
    report = _lp_notes(report, solution, 2.0, {"overload": overload, "blow_up": verdict.blow_up})
    return RoutingOutcome(schedule, report, congestion, solution, paths)
