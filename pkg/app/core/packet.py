import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.circuit import alpha_interval, choose_paths
from app.core.config import settings
from app.core.errors import DecompositionError, PacketError
from app.core.lp import IntervalGrid, LpProblem, LpSolution, build_packet_lp, make_grid, var_name
from app.core.lp_format import export_lp
from app.core.model import FlowKey, Instance, ScheduleReport, add_dummy_flows, key_str
from app.core.network import Arc, EdgeFlow, Network, Path, decompose_flow, thickest_paths
from app.core.simplex import solve
from app.core.teg import TegArc, TimeExpandedGraph, expand

logger = logging.getLogger(__name__)

__all__ = [
    "TimeExpandedGraph", "expand", "collapse", "filter_half_intervals", "greedy_packet_schedule",
    "schedule_packets", "PacketSchedule", "IntervalBuckets", "check_packet_schedule", "map_packet_schedule_to_lp",
]

_SINK = ("~sink", -1)
RESCALE_LIMIT = 2.0


@dataclass
class PacketTrace:
    key: FlowKey
    path: Path
    release: float
    delay: int
    moves: List[int] = field(default_factory=list)  # step at which each path arc is crossed

    @property
    def completion(self) -> int:
        return self.moves[-1] + 1 if self.moves else math.ceil(self.release)

    def position(self, step: int) -> str:
        """Node the packet sits at (or arrives at) when ``step`` begins"""
        hops = sum(1 for m in self.moves if m < step)
        return self.path.nodes[hops]


@dataclass
class PacketSchedule:
    traces: Dict[FlowKey, PacketTrace] = field(default_factory=dict)
    occupancy: Dict[Tuple[Arc, int], FlowKey] = field(default_factory=dict)
    start: int = 0

    @property
    def completions(self) -> Dict[FlowKey, int]:
        return {k: t.completion for k, t in self.traces.items()}

    @property
    def makespan(self) -> int:
        return max(self.completions.values(), default=self.start)

    def arc_counts(self) -> Dict[Arc, int]:
        """Packets routed over each arc"""
        counts: Dict[Arc, int] = {}
        for trace in self.traces.values():
            for arc in trace.path.arcs:
                counts[arc] = counts.get(arc, 0) + 1
        return counts

    @property
    def congestion(self) -> int:
        return max(self.arc_counts().values(), default=0)

    @property
    def dilation(self) -> int:
        return max((len(t.path) for t in self.traces.values()), default=0)

    def merge(self, other: "PacketSchedule") -> "PacketSchedule":
        clash = set(self.occupancy) & set(other.occupancy)
        if clash:
            raise PacketError(f"schedules overlap on {sorted(clash)[0]}")
        return PacketSchedule(traces={**self.traces, **other.traces},
                              occupancy={**self.occupancy, **other.occupancy},
                              start=min(self.start, other.start))

    def rows(self) -> List[Dict]:
        """One (packet, step, location) row per step a packet is in the network"""
        out = []
        for key in sorted(self.traces):
            trace = self.traces[key]
            for step in range(math.ceil(trace.release), trace.completion + 1):
                out.append({"packet": key_str(key), "step": step, "location": trace.position(step)})
        return out


def check_packet_schedule(schedule: PacketSchedule) -> List[str]:
    """Rebuild occupancy from the traces and list every broken rule"""
    problems = []
    seen: Dict[Tuple[Arc, int], FlowKey] = {}
    for key, trace in schedule.traces.items():
        if len(trace.moves) != len(trace.path):
            problems.append(f"{key_str(key)} does not reach {trace.path.sink}")
            continue
        if trace.moves and trace.moves[0] < trace.release:
            problems.append(f"{key_str(key)} moves at {trace.moves[0]} before release {trace.release}")
        if any(b <= a for a, b in zip(trace.moves, trace.moves[1:])):
            problems.append(f"{key_str(key)} crosses two arcs in one step")
        for arc, step in zip(trace.path.arcs, trace.moves):
            if (arc, step) in seen:
                problems.append(f"{key_str(key)} and {key_str(seen[(arc, step)])} share {arc} at step {step}")
            seen[(arc, step)] = key
    return problems


def greedy_packet_schedule(network: Network, packets: Dict[FlowKey, Tuple[Path, float]], seed: int,
                           start: int = 0, order: Optional[Sequence[FlowKey]] = None) -> PacketSchedule:
    """Store-and-forward schedule: every step each arc forwards its best waiting packet.

    Priority is a seeded random permutation (or ``order`` when given). Each packet
    also draws an initial delay in {0, ..., C-1}; until it elapses the packet
    yields to every undelayed packet but still moves over an otherwise idle arc.
    """
    for key, (path, _) in packets.items():
        network.path(path.nodes)
    if not packets:
        return PacketSchedule(start=start)

    rng = np.random.default_rng(seed)
    keys = sorted(packets)
    counts: Dict[Arc, int] = {}
    for path, _ in packets.values():
        for arc in path.arcs:
            counts[arc] = counts.get(arc, 0) + 1
    congestion = max(counts.values())

    if order is None:
        rank = {key: int(r) for key, r in zip(keys, rng.permutation(len(keys)))}
    else:
        rank = {key: n for n, key in enumerate(order)}
    delays = rng.integers(0, congestion, size=len(keys)) if congestion > 1 else np.zeros(len(keys), dtype=int)
    traces = {key: PacketTrace(key=key, path=packets[key][0], release=packets[key][1], delay=int(d))
              for key, d in zip(keys, delays)}
    ready_at = {key: max(start, math.ceil(packets[key][1])) for key in keys}

    occupancy: Dict[Tuple[Arc, int], FlowKey] = {}
    pending = set(keys)
    t = min(ready_at.values())
    while pending:
        waiting: Dict[Arc, List[FlowKey]] = {}
        for key in pending:
            trace = traces[key]
            if ready_at[key] <= t:
                waiting.setdefault(trace.path.arcs[len(trace.moves)], []).append(key)
        if not waiting:
            t = min(ready_at[k] for k in pending)
            continue
        for arc, contenders in waiting.items():
            best = min(contenders, key=lambda k: (t < ready_at[k] + traces[k].delay, rank[k], k))
            trace = traces[best]
            trace.moves.append(t)
            occupancy[(arc, t)] = best
            if len(trace.moves) == len(trace.path):
                pending.discard(best)
        t += 1
    return PacketSchedule(traces=traces, occupancy=occupancy, start=start)


@dataclass
class IntervalBuckets:
    half: Dict[FlowKey, int]
    scale: Dict[FlowKey, float]
    filtered: Dict[FlowKey, List[float]]

    @property
    def buckets(self) -> Dict[int, List[FlowKey]]:
        """P[l]: packets whose half-interval is l"""
        out: Dict[int, List[FlowKey]] = {}
        for key in sorted(self.half):
            out.setdefault(self.half[key], []).append(key)
        return dict(sorted(out.items()))


def filter_half_intervals(masses: Dict[FlowKey, Sequence[float]], rule: str = "strict") -> IntervalBuckets:
    """Assign each packet to its half-interval, zero the mass after it and rescale the rest"""
    half, scale, filtered = {}, {}, {}
    for key, series in masses.items():
        if abs(sum(series) - 1.0) > 1e-7:
            raise PacketError(f"packet {key_str(key)} masses sum to {sum(series):.9f}")
        h = alpha_interval(series, 0.5, rule)
        kept = sum(series[:h + 1])
        factor = 1.0 / kept
        if factor > RESCALE_LIMIT + 1e-9:
            raise PacketError(f"packet {key_str(key)} rescaled by {factor:.4f} > 2")
        half[key] = h
        scale[key] = factor
        filtered[key] = [m * factor if ell <= h else 0.0 for ell, m in enumerate(series)]
    return IntervalBuckets(half=half, scale=scale, filtered=filtered)


def collapse(teg: TimeExpandedGraph, flows: Dict[FlowKey, Dict[TegArc, float]],
             endpoints: Dict[FlowKey, Tuple[str, str]]) -> Tuple[Network, Dict[FlowKey, EdgeFlow]]:
    """Fold time stamps away and drop queue arcs"""
    out: Dict[FlowKey, EdgeFlow] = {}
    for key, teg_flow in flows.items():
        src, dst = endpoints[key]
        arcs: Dict[Arc, float] = {}
        for teg_arc, amount in teg_flow.items():
            base = teg.base_arc(teg_arc)
            if base is not None and amount > 0:
                arcs[base] = arcs.get(base, 0.0) + amount
        value = sum(a for (u, _), a in arcs.items() if u == src) - sum(a for (_, v), a in arcs.items() if v == src)
        edge_flow = EdgeFlow(source=src, sink=dst, value=value, flows=arcs)
        try:
            edge_flow.check(tol=settings.LP_FEAS_TOL)
        except DecompositionError as e:
            raise PacketError(f"collapsed flow of packet {key_str(key)} breaks conservation: {e}")
        out[key] = edge_flow
    return teg.network, out


def _kappa_bound(grid: IntervalGrid, ell: int) -> float:
    if ell < len(grid.boundaries):
        return grid.boundaries[ell]
    return grid.boundaries[-1] * 2 ** (ell - len(grid.boundaries) + 1)


def default_packet_horizon(instance: Instance) -> int:
    packets = len(instance.real_flows())
    return math.ceil(instance.max_release()) + len(instance.network.arc_keys()) * packets


def schedule_packets(instance: Instance, seed: int = 0, given_paths: bool = False, use_lp: bool = True,
                     horizon: Optional[int] = None,
                     lp_dump: Optional[str] = None) -> Tuple[PacketSchedule, ScheduleReport]:
    """Route and schedule unit packets.

    Free paths: packet LP, half-interval buckets, per-bucket collapse and
    decomposition, one random path per packet, greedy schedule per bucket with
    buckets run back to back. Given paths: one greedy run over the fixed paths,
    ordered by LP completion or, without the LP, by path length over weight.
    """
    network = instance.network
    packets = instance.real_flows()
    for key, p in packets:
        if p.size != 1:
            raise PacketError(f"packet {key_str(key)} has size {p.size}")
    if not packets:
        return PacketSchedule(), _packet_report(instance, PacketSchedule(), None, {})

    if given_paths and not use_lp:
        order = sorted((k for k, _ in packets),
                       key=lambda k: (len(instance.flow(k).path) / max(instance.coflows[k[0]].weight, 1e-12), k))
        schedule = greedy_packet_schedule(network, {k: (p.path, p.release) for k, p in packets}, seed, order=order)
        return schedule, _packet_report(instance, schedule, None, {"order": "length-over-weight"})

    cap = settings.PACKET_HORIZON_CAP
    horizon = horizon or min(default_packet_horizon(instance), cap)
    instance = add_dummy_flows(instance)
    grid = make_grid("packet", 1.0, horizon)
    problem = build_packet_lp(instance, grid, horizon, restrict_to_paths=given_paths, cap=cap,
                              step_rows=settings.PACKET_STEP_ROWS)
    if lp_dump:
        export_lp(problem, lp_dump)
    solution = solve(problem).require_optimal()

    if given_paths:
        order = sorted((k for k, _ in packets), key=lambda k: (solution.completion(k), k))
        schedule = greedy_packet_schedule(network, {k: (p.path, p.release) for k, p in packets}, seed, order=order)
        return schedule, _packet_report(instance, schedule, solution, {"order": "lp"})

    teg = expand(network, horizon, cap=cap)
    masses = {k: solution.masses(k) for k, _ in packets}
    buckets = filter_half_intervals(masses)

    # Filter each packet's time-expanded paths to its half-interval, rescale, collapse
    teg_flows: Dict[FlowKey, Dict[TegArc, float]] = {}
    for key, p in packets:
        limit = grid.bounds(buckets.half[key])[1]
        kept: Dict[TegArc, float] = {}
        for nodes, amount, arrival in _packet_teg_paths(solution, key, p, math.ceil(p.release)):
            if arrival <= limit:
                for arc in zip(nodes, nodes[1:]):
                    kept[arc] = kept.get(arc, 0.0) + amount
        total = sum(a for (u, _), a in kept.items() if u == (p.src, math.ceil(p.release)))
        teg_flows[key] = {arc: a / total for arc, a in kept.items()}
    _, collapsed = collapse(teg, teg_flows, {k: (p.src, p.dst) for k, p in packets})

    path_sets = {key: decompose_flow(network, ef, settings.LP_FEAS_TOL) for key, ef in collapsed.items()}
    paths, congestion = choose_paths(network, path_sets, seed, demands={k: 1.0 for k in path_sets},
                                     groups=buckets.half)

    # Buckets run strictly one after another
    schedule = PacketSchedule()
    clock = 0
    kappa, kappa_prime = 0.0, 0.0
    for ell, keys in buckets.buckets.items():
        part = greedy_packet_schedule(network, {k: (paths[k], instance.flow(k).release) for k in keys},
                                      seed + ell, start=clock)
        begin = min(max(clock, math.ceil(instance.flow(k).release)) for k in keys)
        kappa = max(kappa, (part.makespan - begin) / _kappa_bound(grid, ell + 2))
        kappa_prime = max(kappa_prime, part.makespan / _kappa_bound(grid, ell + 1))
        schedule = schedule.merge(part)
        clock = part.makespan

    notes = {"kappa": kappa, "kappa_prime": kappa_prime, "horizon": float(horizon),
             "path_overload": congestion.overload}
    return schedule, _packet_report(instance, schedule, solution, notes)


def _packet_teg_paths(solution: LpSolution, key: FlowKey, packet, start: int):
    """(time-expanded node list, amount, arrival step) per path of one packet"""
    flows: Dict = {}
    for col, sym in solution.problem.columns("xp", key):
        amount = float(solution.values[col])
        if amount > 1e-12:
            flows[sym.teg_arc] = amount
    for col, sym in solution.problem.columns("b", key):
        amount = float(solution.values[col])
        if amount > 1e-12:
            flows[((packet.dst, sym.step), _SINK)] = amount
    edge_flow = EdgeFlow(source=(packet.src, start), sink=_SINK, value=1.0, flows=flows)
    paths = thickest_paths(edge_flow, settings.LP_FEAS_TOL)
    return [(nodes[:-1], amount, nodes[-2][1]) for nodes, amount in paths]


def _packet_report(instance: Instance, schedule: PacketSchedule, solution: Optional[LpSolution],
                   notes: Dict) -> ScheduleReport:
    completions = {key_str(k): float(c) for k, c in schedule.completions.items()}
    coflow_completions: Dict[int, float] = {i: 0.0 for i in range(len(instance.coflows))}
    for k, c in schedule.completions.items():
        coflow_completions[k[0]] = max(coflow_completions[k[0]], float(c))
    objective = sum(instance.coflows[i].weight * c for i, c in coflow_completions.items())
    problems = check_packet_schedule(schedule)
    notes = dict(notes)
    notes.update({"congestion": float(schedule.congestion), "dilation": float(schedule.dilation),
                  "makespan": float(schedule.makespan)})
    report = ScheduleReport(completions=completions, coflow_completions=coflow_completions,
                            objective=objective, feasible=not problems, notes=notes)
    if solution is not None:
        lp = solution.objective
        notes["lp_ratio"] = objective / lp if lp > 0 else 1.0
        report = report.model_copy(update={"lp_objective": lp, "lower_bound": lp, "notes": notes})
    if problems:
        logger.error("[PACKET] schedule broken: %s", problems[0])
    return report


def map_packet_schedule_to_lp(instance: Instance, schedule: PacketSchedule, grid: IntervalGrid,
                              problem: LpProblem) -> np.ndarray:
    """LP point that routes each packet exactly along its trace"""
    instance = add_dummy_flows(instance)
    x = np.zeros(problem.n_vars)
    for key, trace in schedule.traces.items():
        start = math.ceil(trace.release)
        for t in range(start, trace.completion):
            here = trace.position(t)
            there = trace.position(t + 1)
            x[problem.index(var_name("xp", key, f"{here}.{t}.{there}"))] = 1.0
        x[problem.index(var_name("b", key, trace.completion))] = 1.0
        x[problem.index(var_name("f", key, grid.interval_of(trace.completion)))] = 1.0
        x[problem.index(var_name("c", key))] = float(trace.completion)
    for i in range(len(instance.coflows)):
        members = [c for k, c in schedule.completions.items() if k[0] == i]
        x[problem.index(var_name("c", (i, 0)))] = float(max(members, default=0))
    return x
