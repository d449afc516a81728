import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Literal, Optional, Tuple

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import sparse

from app.core.config import settings
from app.core.errors import GridError, InfeasibleError, LpError, UnboundedError
from app.core.model import CircuitSchedule, FlowKey, Instance, add_dummy_flows
from app.core.network import Arc
from app.core.teg import TimeExpandedGraph, expand

logger = logging.getLogger(__name__)

Sense = Literal["<=", ">=", "="]


class IntervalGrid(BaseModel):
    """Geometric time grid.

    Interval 0 is [0, boundaries[1]]; interval l >= 1 is (boundaries[l], boundaries[l+1]].
    """
    kind: Literal["circuit", "packet"]
    epsilon: float
    boundaries: Tuple[float, ...]

    model_config = ConfigDict(frozen=True)

    @property
    def count(self) -> int:
        return len(self.boundaries) - 1

    @property
    def end(self) -> float:
        return self.boundaries[-1]

    def bounds(self, interval: int) -> Tuple[float, float]:
        lo = 0.0 if interval == 0 else self.boundaries[interval]
        return lo, self.boundaries[interval + 1]

    def tau(self, interval: int) -> float:
        return self.boundaries[interval]

    def interval_of(self, t: float) -> int:
        for ell in range(self.count):
            if t <= self.boundaries[ell + 1]:
                return ell
        raise GridError(f"time {t} lies beyond the grid end {self.end}")


def make_grid(kind: Literal["circuit", "packet"], epsilon: float, horizon: float) -> IntervalGrid:
    if not horizon > 0:
        raise GridError(f"horizon must be positive, got {horizon}")
    if kind == "circuit":
        if not epsilon > 0:
            raise GridError(f"epsilon must be positive, got {epsilon}")
        points = [0.0, 1.0]
        ell = 1
        while points[-1] < horizon:
            ell += 1
            points.append((1.0 + epsilon) ** (ell - 1))
        return IntervalGrid(kind=kind, epsilon=epsilon, boundaries=tuple(points))

    if kind == "packet":
        points = [1.0, 2.0]
        while points[-1] < horizon:
            points.append(points[-1] * 2)
        return IntervalGrid(kind=kind, epsilon=1.0, boundaries=tuple(points))

    raise GridError(f"unknown grid kind {kind!r}")


def default_horizon(instance: Instance) -> float:
    """Sequential worst case: last release plus every byte through the thinnest arc"""
    return instance.max_release() + instance.total_volume() / instance.network.min_capacity


def lp_horizon(instance: Instance, epsilon: float) -> float:
    """Grid end that leaves room for every flow's volume after its release"""
    release = max(instance.max_release(), 1.0)
    return (1 + epsilon) * release + epsilon * instance.total_volume() / instance.network.min_capacity


@dataclass(frozen=True)
class Symbol:
    """What an LP column stands for.

    kind: ``x`` interval mass, ``c`` completion, ``xe`` per-interval arc rate,
    ``xp`` packet flow on a time-expanded arc, ``b`` packet arrival demand,
    ``f`` packet interval mass.
    """
    kind: str
    key: FlowKey
    interval: Optional[int] = None
    arc: Optional[Arc] = None
    teg_arc: Optional[tuple] = None
    step: Optional[int] = None

    @property
    def label(self) -> str:
        i, j = self.key
        parts = [f"{self.kind}[{i},{j}"]
        if self.interval is not None:
            parts.append(f",l={self.interval}")
        if self.arc is not None:
            parts.append(f",e={self.arc[0]}->{self.arc[1]}")
        if self.step is not None:
            parts.append(f",t={self.step}")
        return "".join(parts) + "]"


@dataclass
class Row:
    name: str
    coeffs: Dict[int, float]
    sense: Sense
    rhs: float


class LpProblem:
    """Sparse LP: named bounded columns, linear rows and a linear objective"""

    def __init__(self, name: str = "coflow", sense: Literal["min", "max"] = "min"):
        self.name = name
        self.sense = sense
        self.names: List[str] = []
        self.lower: List[float] = []
        self.upper: List[float] = []
        self.cost: List[float] = []
        self.rows: List[Row] = []
        self.directory: Dict[str, Symbol] = {}
        self._index: Dict[str, int] = {}

    @property
    def n_vars(self) -> int:
        return len(self.names)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def add_var(self, name: str, lower: float = 0.0, upper: float = math.inf, cost: float = 0.0,
                symbol: Optional[Symbol] = None) -> int:
        if name in self._index:
            raise LpError(f"variable {name} declared twice")
        if lower > upper:
            raise LpError(f"variable {name} has empty bounds [{lower}, {upper}]")
        idx = len(self.names)
        self._index[name] = idx
        self.names.append(name)
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        self.cost.append(float(cost))
        if symbol is not None:
            self.directory[name] = symbol
        return idx

    def add_row(self, name: str, coeffs: Dict[int, float], sense: Sense, rhs: float) -> int:
        if sense not in ("<=", ">=", "="):
            raise LpError(f"row {name} has unknown relation {sense!r}")
        for col in coeffs:
            if not 0 <= col < self.n_vars:
                raise LpError(f"row {name} references undeclared column {col}")
        self.rows.append(Row(name=name, coeffs={c: float(v) for c, v in coeffs.items() if v != 0},
                             sense=sense, rhs=float(rhs)))
        return len(self.rows) - 1

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise LpError(f"unknown variable {name}")

    def has_var(self, name: str) -> bool:
        return name in self._index

    def columns(self, kind: str, key: Optional[FlowKey] = None) -> List[Tuple[int, Symbol]]:
        out = []
        for name, sym in self.directory.items():
            if sym.kind == kind and (key is None or sym.key == key):
                out.append((self._index[name], sym))
        return out

    def check(self):
        if self.n_vars == 0:
            raise LpError(f"problem {self.name} has no variables")
        missing = [n for n in self.names if n not in self.directory]
        if missing and self.directory:
            raise LpError(f"columns without a symbol: {missing[:5]}")

    def matrices(self):
        """(c, A_ub, b_ub, A_eq, b_eq, bounds) for a minimization, CSR matrices"""
        n = self.n_vars
        c = np.array(self.cost, dtype=float)
        if self.sense == "max":
            c = -c
        ub_rows, ub_rhs, eq_rows, eq_rhs = [], [], [], []
        for row in self.rows:
            if row.sense == "=":
                eq_rows.append(row.coeffs)
                eq_rhs.append(row.rhs)
            elif row.sense == "<=":
                ub_rows.append(row.coeffs)
                ub_rhs.append(row.rhs)
            else:
                ub_rows.append({k: -v for k, v in row.coeffs.items()})
                ub_rhs.append(-row.rhs)
        bounds = list(zip(self.lower, self.upper))
        return (c, _to_csr(ub_rows, n), np.array(ub_rhs, dtype=float),
                _to_csr(eq_rows, n), np.array(eq_rhs, dtype=float), bounds)

    def objective_value(self, x: np.ndarray) -> float:
        return float(np.dot(self.cost, x))

    def violations(self, x: np.ndarray, tol: Optional[float] = None) -> List[Tuple[str, float]]:
        """Rows and bounds violated by ``x`` beyond ``tol`` relative to the rhs"""
        tol = settings.LP_FEAS_TOL if tol is None else tol
        bad = []
        for row in self.rows:
            lhs = sum(v * x[c] for c, v in row.coeffs.items())
            scale = max(1.0, abs(row.rhs), max((abs(v * x[c]) for c, v in row.coeffs.items()), default=0.0))
            gap = {"<=": lhs - row.rhs, ">=": row.rhs - lhs, "=": abs(lhs - row.rhs)}[row.sense]
            if gap > tol * scale:
                bad.append((row.name, gap))
        for idx, name in enumerate(self.names):
            scale = max(1.0, abs(x[idx]))
            if x[idx] < self.lower[idx] - tol * scale or x[idx] > self.upper[idx] + tol * scale:
                bad.append((name, float(x[idx])))
        return bad

    def __repr__(self):
        return f"LpProblem({self.name!r}, vars={self.n_vars}, rows={self.n_rows})"


def _to_csr(rows: List[Dict[int, float]], n: int) -> sparse.csr_matrix:
    data, indices, indptr = [], [], [0]
    for coeffs in rows:
        for col in sorted(coeffs):
            indices.append(col)
            data.append(coeffs[col])
        indptr.append(len(indices))
    return sparse.csr_matrix((data, indices, indptr), shape=(len(rows), n))


@dataclass
class LpSolution:
    status: Literal["optimal", "infeasible", "unbounded"]
    objective: float
    values: np.ndarray
    iterations: int
    backend: str
    problem: LpProblem = field(repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def require_optimal(self) -> "LpSolution":
        if self.status == "infeasible":
            raise InfeasibleError(f"{self.problem.name} has no feasible point")
        if self.status == "unbounded":
            raise UnboundedError(f"{self.problem.name} is unbounded")
        return self

    def value(self, name: str) -> float:
        return float(self.values[self.problem.index(name)])

    def series(self, kind: str, key: FlowKey) -> List[float]:
        """Values of one flow's ``kind`` columns, ordered by interval then step"""
        cols = sorted(self.problem.columns(kind, key), key=lambda p: (p[1].interval or 0, p[1].step or 0))
        return [float(self.values[idx]) for idx, _ in cols]

    def masses(self, key: FlowKey) -> List[float]:
        kind = "f" if self.problem.columns("f", key) else "x"
        return self.series(kind, key)

    def completion(self, key: FlowKey) -> float:
        return self.value(var_name("c", key))


def var_name(kind: str, key: FlowKey, *rest) -> str:
    return "_".join([kind, str(key[0]), str(key[1])] + [str(r) for r in rest])


def _zero_interval(grid: IntervalGrid, size: float, release: float, ell: int) -> bool:
    # tau_0 = 0 gives positive-size flows an unbounded rate in interval 0
    if size > 0 and grid.tau(ell) == 0:
        return True
    return release > grid.boundaries[ell + 1]


def _interval_columns(problem: LpProblem, instance: Instance, grid: IntervalGrid) -> Dict[FlowKey, List[int]]:
    """Mass columns, completion columns and the mass, completion and precedence rows"""
    cols: Dict[FlowKey, List[int]] = {}
    for key, flow in instance.flows():
        if flow.release > grid.end:
            raise LpError(f"flow {key} is released at {flow.release} after the grid end {grid.end}")
        xs = []
        for ell in range(grid.count):
            upper = 0.0 if _zero_interval(grid, flow.size, flow.release, ell) else math.inf
            xs.append(problem.add_var(var_name("x", key, ell), upper=upper,
                                      symbol=Symbol("x", key, interval=ell)))
        c = problem.add_var(var_name("c", key), cost=instance.flow_weight(key), symbol=Symbol("c", key))
        problem.add_row(f"mass_{key[0]}_{key[1]}", {x: 1.0 for x in xs}, "=", 1.0)
        comp = {x: grid.tau(ell) for ell, x in enumerate(xs)}
        comp[c] = -1.0
        problem.add_row(f"done_{key[0]}_{key[1]}", comp, "<=", 0.0)
        cols[key] = xs

    for key, _ in instance.real_flows():
        c = problem.index(var_name("c", key))
        c0 = problem.index(var_name("c", (key[0], 0)))
        problem.add_row(f"prec_{key[0]}_{key[1]}", {c: 1.0, c0: -1.0}, "<=", 0.0)
    return cols


def build_circuit_given_paths_lp(instance: Instance, grid: IntervalGrid) -> LpProblem:
    instance = add_dummy_flows(instance)
    if grid.kind != "circuit":
        raise LpError("circuit LP needs a circuit grid")
    problem = LpProblem("circuit_given_paths")
    cols = _interval_columns(problem, instance, grid)

    users: Dict[Arc, List[FlowKey]] = {}
    for key, flow in instance.real_flows():
        if flow.path is None:
            raise LpError(f"flow {key} has no path")
        for arc in flow.path.arcs:
            users.setdefault(arc, []).append(key)

    # Capacity: sum of sigma * x / tau over the flows crossing each arc
    for ell in range(grid.count):
        if grid.tau(ell) == 0:
            continue
        for arc in sorted(users):
            coeffs = {}
            for key in users[arc]:
                flow = instance.flow(key)
                if flow.size > 0:
                    coeffs[cols[key][ell]] = flow.size / grid.tau(ell)
            if coeffs:
                problem.add_row(f"cap_{ell}_{arc[0]}_{arc[1]}", coeffs, "<=", instance.network.capacity(*arc))

    problem.check()
    logger.info("[LP] given-paths problem: %d columns, %d rows", problem.n_vars, problem.n_rows)
    return problem


def build_circuit_routing_lp(instance: Instance, grid: IntervalGrid) -> LpProblem:
    instance = add_dummy_flows(instance)
    if grid.kind != "circuit":
        raise LpError("circuit LP needs a circuit grid")
    network = instance.network
    problem = LpProblem("circuit_routing")
    cols = _interval_columns(problem, instance, grid)
    arc_ids = {arc: n for n, arc in enumerate(network.arc_keys())}
    load: Dict[Tuple[int, Arc], Dict[int, float]] = {}

    for key, flow in instance.real_flows():
        if flow.size == 0:
            continue
        for ell in range(grid.count):
            if _zero_interval(grid, flow.size, flow.release, ell):
                continue
            node_rows: Dict[str, Dict[int, float]] = {v: {} for v in network.nodes}
            for arc in network.arc_keys():
                u, v = arc
                # Arcs into the source or out of the sink only carry cycles
                if v == flow.src or u == flow.dst:
                    continue
                col = problem.add_var(var_name("xe", key, ell, f"e{arc_ids[arc]}"),
                                      symbol=Symbol("xe", key, interval=ell, arc=arc))
                node_rows[u][col] = node_rows[u].get(col, 0.0) - 1.0
                node_rows[v][col] = node_rows[v].get(col, 0.0) + 1.0
                load.setdefault((ell, arc), {})[col] = 1.0

            rate = flow.size / grid.tau(ell)
            x = cols[key][ell]
            node_rows[flow.dst][x] = -rate
            node_rows[flow.src][x] = rate
            for v in network.nodes:
                if node_rows[v]:
                    problem.add_row(f"cons_{key[0]}_{key[1]}_{ell}_{v}", node_rows[v], "=", 0.0)

    for (ell, arc), coeffs in sorted(load.items()):
        problem.add_row(f"cap_{ell}_{arc[0]}_{arc[1]}", coeffs, "<=", network.capacity(*arc))

    problem.check()
    logger.info("[LP] routing problem: %d columns, %d rows", problem.n_vars, problem.n_rows)
    return problem


def _packet_nodes(network, src: str, dst: str, start: int, horizon: int,
                  arcs: Optional[Iterable[Arc]] = None):
    """Steps at which each node can be on a src->dst trip that ends by ``horizon``"""
    graph = network.graph if arcs is None else nx.DiGraph(list(arcs))
    if src not in graph or dst not in graph:
        return {}
    # The destination absorbs: no trip passes through it
    forward = nx.DiGraph(graph.subgraph(graph.nodes))
    forward.remove_edges_from(list(forward.out_edges(dst)))
    from_src = nx.single_source_shortest_path_length(forward, src)
    to_dst = nx.single_source_shortest_path_length(forward.reverse(copy=False), dst)
    window = {}
    for v, d_in in from_src.items():
        if v not in to_dst:
            continue
        lo, hi = start + d_in, horizon - to_dst[v]
        if lo <= hi:
            window[v] = (lo, hi)
    return window


def build_packet_lp(instance: Instance, grid: IntervalGrid, horizon: int,
                    restrict_to_paths: bool = False, cap: Optional[int] = None,
                    step_rows: bool = True) -> LpProblem:
    """Time-expanded LP over unit packets.

    One commodity per packet leaves (s, release) and is absorbed at the copies
    (d, t) with demands b^t summing to 1. Congestion and dilation rows cap the
    mass at every grid boundary, and queue arcs never count towards dilation.
    With ``step_rows`` each movement copy also carries at most one packet per
    step; every packet schedule obeys that, so the LP stays a lower bound.
    """
    cap = settings.PACKET_HORIZON_CAP if cap is None else cap
    if horizon > cap:
        raise LpError(f"time-expanded horizon {horizon} exceeds the cap {cap}")
    if grid.kind != "packet":
        raise LpError("packet LP needs a packet grid")
    if grid.end < horizon:
        raise LpError(f"grid ends at {grid.end} before the horizon {horizon}")
    instance = add_dummy_flows(instance)
    teg: TimeExpandedGraph = expand(instance.network, horizon, cap=cap)
    problem = LpProblem("packet")

    step_load: Dict[tuple, Dict[int, float]] = {}
    arc_load: Dict[Arc, List[Tuple[int, int]]] = {}

    for i, coflow in enumerate(instance.coflows):
        problem.add_var(var_name("c", (i, 0)), cost=coflow.weight, symbol=Symbol("c", (i, 0)))

    for key, packet in instance.real_flows():
        if packet.size != 1:
            raise LpError(f"packet {key} has size {packet.size}")
        start = math.ceil(packet.release)
        allowed = packet.path.arcs if restrict_to_paths and packet.path is not None else None
        window = _packet_nodes(instance.network, packet.src, packet.dst, start, horizon, allowed)
        if packet.dst not in window:
            raise InfeasibleError(f"packet {key} cannot reach {packet.dst} by step {horizon}")

        allowed_set = set(allowed) if allowed is not None else None
        node_rows: Dict[tuple, Dict[int, float]] = {}
        moves: List[Tuple[int, int]] = []
        for (u, t), (v, t1), kind in teg.graph.edges(data="kind"):
            if u == packet.dst or u not in window or v not in window:
                continue
            if not (window[u][0] <= t and window[v][0] <= t1 <= window[v][1]):
                continue
            if kind == "move" and allowed_set is not None and (u, v) not in allowed_set:
                continue
            col = problem.add_var(var_name("xp", key, f"{u}.{t}.{v}"), upper=1.0,
                                  symbol=Symbol("xp", key, arc=None if kind == "queue" else (u, v),
                                                teg_arc=((u, t), (v, t1)), step=t1))
            node_rows.setdefault((u, t), {})[col] = -1.0
            node_rows.setdefault((v, t1), {})[col] = 1.0
            if kind == "move":
                step_load.setdefault(((u, t), (v, t1)), {})[col] = 1.0
                moves.append((col, t1))
                arc_load.setdefault((u, v), []).append((col, t1))

        # Arrival demands at the destination copies
        arrivals = {}
        lo, hi = window[packet.dst]
        for t in range(max(lo, start + 1), hi + 1):
            b = problem.add_var(var_name("b", key, t), upper=1.0, symbol=Symbol("b", key, step=t))
            arrivals[t] = b
            node_rows.setdefault((packet.dst, t), {})[b] = -1.0

        for node, coeffs in node_rows.items():
            rhs = -1.0 if node == (packet.src, start) else 0.0
            problem.add_row(f"flow_{key[0]}_{key[1]}_{node[0]}.{node[1]}", coeffs, "=", rhs)
        if (packet.src, start) not in node_rows:
            raise InfeasibleError(f"packet {key} has no way out of {packet.src}")

        problem.add_row(f"demand_{key[0]}_{key[1]}", {b: 1.0 for b in arrivals.values()}, "=", 1.0)
        for ell in range(grid.count):
            f = problem.add_var(var_name("f", key, ell), symbol=Symbol("f", key, interval=ell))
            lo_t, hi_t = grid.bounds(ell)
            coeffs = {f: 1.0}
            for t, b in arrivals.items():
                if lo_t < t <= hi_t:
                    coeffs[b] = -1.0
            problem.add_row(f"interval_{key[0]}_{key[1]}_{ell}", coeffs, "=", 0.0)

        c = problem.add_var(var_name("c", key), symbol=Symbol("c", key))
        done = {b: float(t) for t, b in arrivals.items()}
        done[c] = -1.0
        problem.add_row(f"done_{key[0]}_{key[1]}", done, "<=", 0.0)
        problem.add_row(f"prec_{key[0]}_{key[1]}", {c: 1.0, problem.index(var_name("c", (key[0], 0))): -1.0},
                        "<=", 0.0)

        for bound in grid.boundaries:
            coeffs = {col: 1.0 for col, t1 in moves if t1 <= bound}
            if len(coeffs) > bound:
                problem.add_row(f"dil_{key[0]}_{key[1]}_{bound:g}", coeffs, "<=", bound)

    for arc, coeffs in sorted(step_load.items()):
        if step_rows and len(coeffs) > 1:
            (u, t), (v, _) = arc
            problem.add_row(f"step_{u}_{v}_{t}", coeffs, "<=", 1.0)
    for arc, cols in sorted(arc_load.items()):
        for bound in grid.boundaries:
            coeffs = {col: 1.0 for col, t1 in cols if t1 <= bound}
            if len(coeffs) > bound:
                problem.add_row(f"cong_{arc[0]}_{arc[1]}_{bound:g}", coeffs, "<=", bound)

    problem.check()
    logger.info("[LP] packet problem over T=%d: %d columns, %d rows", horizon, problem.n_vars, problem.n_rows)
    return problem


def map_schedule_to_lp(instance: Instance, schedule: CircuitSchedule, grid: IntervalGrid,
                       problem: LpProblem) -> np.ndarray:
    """LP point for a feasible circuit schedule.

    Time shifts by one unit so nothing lands in interval 0; each interval's mass
    is the share of the flow delivered there and each completion column takes
    the resulting mass-weighted boundary sum.
    """
    instance = add_dummy_flows(instance)
    x = np.zeros(problem.n_vars)
    allocations = schedule.by_key()
    arc_cols = {(sym.key, sym.interval, sym.arc): col for col, sym in problem.columns("xe")}

    for key, flow in instance.real_flows():
        masses = [0.0] * grid.count
        if flow.size == 0:
            masses[grid.interval_of(flow.release + 1)] = 1.0
        else:
            profile = allocations[key].profile.shift(1.0)
            for ell in range(grid.count):
                lo, hi = grid.bounds(ell)
                masses[ell] = profile.volume(lo, hi) / flow.size
            if sum(masses) < 1 - 1e-9:
                raise LpError(f"schedule of flow {key} runs past the grid end {grid.end}")
        for ell, m in enumerate(masses):
            x[problem.index(var_name("x", key, ell))] = m
            if arc_cols and m > 0:
                rate = flow.size * m / grid.tau(ell)
                for arc in allocations[key].path.arcs:
                    x[arc_cols[(key, ell, arc)]] = rate
        x[problem.index(var_name("c", key))] = sum(grid.tau(ell) * m for ell, m in enumerate(masses))

    for i, coflow in enumerate(instance.coflows):
        x[problem.index(var_name("x", (i, 0), 0))] = 1.0
        members = [x[problem.index(var_name("c", k))] for k, _ in instance.real_flows() if k[0] == i]
        x[problem.index(var_name("c", (i, 0)))] = max(members, default=0.0)
    return x
