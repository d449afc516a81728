import math
from typing import Dict, Iterable, List, Literal, Optional, Sequence, Tuple

from pydantic import (BaseModel, ConfigDict, Field, field_serializer, field_validator,
                      model_validator)

from app.core.errors import InstanceError, ScheduleError
from app.core.network import Network, NetworkDocument, Path, bottleneck

TOL = 1e-9

FlowKey = Tuple[int, int]
Mode = Literal["paths-given", "paths-free", "packet"]


def key_str(key: FlowKey) -> str:
    return f"{key[0]}.{key[1]}"


def parse_key(text: str) -> FlowKey:
    i, j = text.split(".")
    return int(i), int(j)


class FlowRequest(BaseModel):
    src: str = ""
    dst: str = ""
    size: float = Field(default=1.0, ge=0)
    release: float = Field(default=0.0, ge=0)
    path: Optional[Path] = None
    dummy: bool = False
    weight: float = 0.0  # reformulated weight; only dummies carry one

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check_endpoints(self):
        if not self.dummy and self.src == self.dst:
            raise ValueError(f"flow source and sink are both {self.src!r}")
        if self.dummy and self.size != 0:
            raise ValueError("dummy flows have size 0")
        return self


class Coflow(BaseModel):
    weight: float = Field(default=1.0, ge=0, allow_inf_nan=False)
    flows: List[FlowRequest] = Field(min_length=1)

    model_config = ConfigDict(frozen=True)

    @property
    def real_flows(self) -> List[FlowRequest]:
        return [f for f in self.flows if not f.dummy]

    @property
    def has_dummy(self) -> bool:
        return any(f.dummy for f in self.flows)


class Instance(BaseModel):
    """Network plus coflows; flows are keyed (coflow index, flow index).

    Real flows of coflow i get keys (i, 1), (i, 2), ... in declaration order and the
    dummy flow, once added, gets (i, 0).
    """
    network: Network
    coflows: List[Coflow]
    mode: Mode = "paths-free"

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True,
                              ser_json_inf_nan="constants")

    @field_validator("network", mode="before")
    @classmethod
    def _network_from_document(cls, value):
        if isinstance(value, Network):
            return value
        return Network.from_document(NetworkDocument.model_validate(value))

    @field_serializer("network")
    def _network_to_document(self, network: Network):
        return network.to_document().model_dump(by_alias=True)

    @model_validator(mode="after")
    def _check_invariants(self):
        nodes = set(self.network.nodes)
        for key, flow in self.flows():
            if flow.dummy:
                continue
            for endpoint in (flow.src, flow.dst):
                if endpoint not in nodes:
                    raise ValueError(f"flow {key_str(key)} endpoint {endpoint!r} is not in the network")
            if flow.path is not None:
                for u, v in flow.path.arcs:
                    if not self.network.has_arc(u, v):
                        raise ValueError(f"flow {key_str(key)} path uses missing arc {u}->{v}")
                if flow.path.source != flow.src or flow.path.sink != flow.dst:
                    raise ValueError(f"flow {key_str(key)} path does not join {flow.src} to {flow.dst}")
            elif self.mode == "paths-given":
                raise ValueError(f"flow {key_str(key)} has no path in paths-given mode")
            if self.mode == "packet" and flow.size != 1:
                raise ValueError(f"packet {key_str(key)} must have size 1")
        return self

    def flows(self) -> List[Tuple[FlowKey, FlowRequest]]:
        out = []
        for i, coflow in enumerate(self.coflows):
            j = 0
            for flow in coflow.flows:
                if flow.dummy:
                    out.append(((i, 0), flow))
                else:
                    j += 1
                    out.append(((i, j), flow))
        return out

    def real_flows(self) -> List[Tuple[FlowKey, FlowRequest]]:
        return [(k, f) for k, f in self.flows() if not f.dummy]

    def flow(self, key: FlowKey) -> FlowRequest:
        for k, f in self.flows():
            if k == key:
                return f
        raise KeyError(key_str(key))

    @property
    def has_dummies(self) -> bool:
        return all(c.has_dummy for c in self.coflows)

    def flow_weight(self, key: FlowKey) -> float:
        """Reformulated weight: the coflow weight on the dummy, zero elsewhere"""
        return self.coflows[key[0]].weight if key[1] == 0 else 0.0

    def total_volume(self) -> float:
        return sum(f.size for _, f in self.real_flows())

    def max_release(self) -> float:
        return max((f.release for _, f in self.real_flows()), default=0.0)


def make_instance(network: Network, coflows: Sequence[Coflow], mode: Mode = "paths-free") -> Instance:
    try:
        return Instance(network=network, coflows=list(coflows), mode=mode)
    except ValueError as e:
        raise InstanceError(str(e))


class Segment(BaseModel):
    start: float
    end: float
    rate: float = Field(ge=0)

    model_config = ConfigDict(frozen=True)

    @property
    def volume(self) -> float:
        return (self.end - self.start) * self.rate


class BandwidthProfile(BaseModel):
    """Piecewise-constant rate; zero outside the listed segments"""
    segments: Tuple[Segment, ...] = ()

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check_order(self):
        prev_end = 0.0
        for seg in self.segments:
            if seg.start < prev_end - TOL or seg.end <= seg.start:
                raise ValueError(f"segment [{seg.start}, {seg.end}] out of order")
            prev_end = seg.end
        return self

    @classmethod
    def constant(cls, start: float, end: float, rate: float) -> "BandwidthProfile":
        if end <= start or rate <= 0:
            return cls()
        return cls(segments=(Segment(start=start, end=end, rate=rate),))

    @property
    def breakpoints(self) -> List[float]:
        points = sorted({s.start for s in self.segments} | {s.end for s in self.segments})
        return points

    def volume(self, t1: float = 0.0, t2: float = math.inf) -> float:
        total = 0.0
        for seg in self.segments:
            lo, hi = max(seg.start, t1), min(seg.end, t2)
            if hi > lo:
                total += (hi - lo) * seg.rate
        return total

    def rate_at(self, t: float) -> float:
        for seg in self.segments:
            if seg.start < t <= seg.end:
                return seg.rate
        return 0.0

    def first_active(self) -> Optional[float]:
        return next((s.start for s in self.segments if s.rate > 0), None)

    def completion(self, size: float) -> float:
        """Earliest time the cumulative delivery reaches ``size``"""
        delivered = 0.0
        for seg in self.segments:
            if seg.rate <= 0:
                continue
            if delivered + seg.volume >= size - TOL * max(1.0, size):
                need = max(0.0, size - delivered)
                return min(seg.end, seg.start + need / seg.rate)
            delivered += seg.volume
        return math.inf

    def dilate(self, factor: float) -> "BandwidthProfile":
        return BandwidthProfile(segments=tuple(
            Segment(start=s.start * factor, end=s.end * factor, rate=s.rate / factor)
            for s in self.segments))

    def shift(self, delay: float) -> "BandwidthProfile":
        return BandwidthProfile(segments=tuple(
            Segment(start=s.start + delay, end=s.end + delay, rate=s.rate) for s in self.segments))

    def replace_window(self, t1: float, t2: float, inner: Iterable[Segment]) -> "BandwidthProfile":
        """Keep the profile outside [t1, t2] and put ``inner`` inside it"""
        kept: List[Segment] = []
        for seg in self.segments:
            if seg.start < t1:
                kept.append(Segment(start=seg.start, end=min(seg.end, t1), rate=seg.rate))
            if seg.end > t2:
                kept.append(Segment(start=max(seg.start, t2), end=seg.end, rate=seg.rate))
        merged = sorted(kept + list(inner), key=lambda s: s.start)
        return BandwidthProfile(segments=tuple(s for s in merged if s.end > s.start))


class FlowAllocation(BaseModel):
    key: FlowKey
    flow: FlowRequest
    path: Path
    profile: BandwidthProfile = BandwidthProfile()

    model_config = ConfigDict(frozen=True)


class CircuitSchedule(BaseModel):
    allocations: List[FlowAllocation] = []
    stretch: float = 1.0

    model_config = ConfigDict(frozen=True)

    def by_key(self) -> Dict[FlowKey, FlowAllocation]:
        return {a.key: a for a in self.allocations}

    def dilate(self, factor: float) -> "CircuitSchedule":
        """Uniform time stretch: breakpoints scale up, rates scale down"""
        if factor == 1.0:
            return self
        allocations = [a.model_copy(update={"profile": a.profile.dilate(factor)})
                       for a in self.allocations]
        return CircuitSchedule(allocations=allocations, stretch=self.stretch * factor)


class Violation(BaseModel):
    kind: Literal["capacity", "release", "volume", "path"]
    time: Optional[float] = None
    arc: Optional[str] = None
    flow: Optional[str] = None
    amount: float = 0.0
    limit: float = 0.0


class Verdict(BaseModel):
    feasible: bool
    violations: List[Violation] = []


class ScheduleReport(BaseModel):
    completions: Dict[str, float]
    coflow_completions: Dict[int, float]
    objective: float
    feasible: bool
    violations: List[Violation] = []
    stretch: float = 1.0
    lp_objective: Optional[float] = None
    lower_bound: Optional[float] = None
    notes: Dict[str, float | str] = {}

    model_config = ConfigDict(ser_json_inf_nan="constants")

    @property
    def makespan(self) -> float:
        return max(self.coflow_completions.values(), default=0.0)


def add_dummy_flows(instance: Instance) -> Instance:
    """Give every coflow a zero-size dummy flow that carries the coflow weight"""
    if instance.has_dummies:
        return instance
    coflows = []
    for coflow in instance.coflows:
        dummy = FlowRequest(size=0.0, release=0.0, dummy=True, weight=coflow.weight)
        real = [f.model_copy(update={"weight": 0.0}) for f in coflow.real_flows]
        coflows.append(Coflow(weight=coflow.weight, flows=[dummy] + real))
    return make_instance(instance.network, coflows, instance.mode)


def _window_volume(allocation: FlowAllocation, t1: float, t2: float) -> float:
    return allocation.profile.volume(t1, t2)


def _check_window(network: Network, allocations: Sequence[FlowAllocation], t1: float, t2: float):
    if t2 <= t1:
        raise ScheduleError(f"empty window [{t1}, {t2}]")
    for a in allocations:
        if a.flow.release > t1 + TOL:
            raise ScheduleError(f"flow {key_str(a.key)} is released after {t1}")
    verdict = validate(network, CircuitSchedule(allocations=list(allocations)), check_volume=False)
    if not verdict.feasible:
        raise ScheduleError(f"input profiles are infeasible: {verdict.violations[0]}")


def constify_bandwidths(network: Network, allocations: Sequence[FlowAllocation],
                        t1: float, t2: float) -> List[FlowAllocation]:
    """Replace each profile on [t1, t2] by the constant rate delivering the same volume"""
    if not allocations:
        return []
    _check_window(network, allocations, t1, t2)
    out = []
    for a in allocations:
        rate = _window_volume(a, t1, t2) / (t2 - t1)
        inner = [Segment(start=t1, end=t2, rate=rate)] if rate > 0 else []
        out.append(a.model_copy(update={"profile": a.profile.replace_window(t1, t2, inner)}))

    verdict = validate(network, CircuitSchedule(allocations=out), check_volume=False)
    if not verdict.feasible:
        raise ScheduleError(f"constant rates overload the network: {verdict.violations[0]}")
    return out


def serialize_on_path(network: Network, path: Path, allocations: Sequence[FlowAllocation],
                      t1: float, t2: float) -> List[FlowAllocation]:
    """Run the flows sharing ``path`` one at a time at the path bottleneck rate"""
    if not allocations:
        return []
    for a in allocations:
        if a.path != path:
            raise ScheduleError(f"flow {key_str(a.key)} does not use path {path}")
    _check_window(network, allocations, t1, t2)

    c_m = bottleneck(network, path)
    out = []
    clock = t1
    for a in allocations:
        volume = _window_volume(a, t1, t2)
        inner = []
        if volume > 0:
            end = clock + volume / c_m
            inner = [Segment(start=clock, end=end, rate=c_m)]
            clock = end
        out.append(a.model_copy(update={"profile": a.profile.replace_window(t1, t2, inner)}))
    if clock > t2 + TOL * max(1.0, t2):
        raise ScheduleError(f"serialized flows finish at {clock} after {t2}")
    return out


def _sweep(allocations: Iterable[FlowAllocation]):
    """Yield (time, arc, load) for every arc whose summed rate changes at ``time``"""
    events: List[Tuple[float, float, FlowAllocation]] = []
    for a in allocations:
        for seg in a.profile.segments:
            if seg.rate > 0:
                events.append((seg.start, seg.rate, a))
                events.append((seg.end, -seg.rate, a))

    # Ends sort before starts at equal times
    events.sort(key=lambda e: (e[0], e[1]))
    load: Dict[Tuple[str, str], float] = {}
    i = 0
    while i < len(events):
        t = events[i][0]
        touched = set()
        while i < len(events) and events[i][0] == t:
            _, delta, a = events[i]
            for arc in a.path.arcs:
                load[arc] = load.get(arc, 0.0) + delta
                touched.add(arc)
            i += 1
        for arc in sorted(touched):
            yield t, arc, load[arc]


def peak_loads(schedule: CircuitSchedule) -> Dict[Tuple[str, str], float]:
    """Largest summed rate each arc ever carries"""
    peaks: Dict[Tuple[str, str], float] = {}
    for _, arc, load in _sweep(a for a in schedule.allocations if not a.flow.dummy):
        peaks[arc] = max(peaks.get(arc, 0.0), load)
    return peaks


def overload_factor(network: Network, schedule: CircuitSchedule) -> float:
    """max over arcs of peak load / capacity (0 for an idle schedule)"""
    return max((load / network.capacity(*arc) for arc, load in peak_loads(schedule).items()), default=0.0)


def validate(network: Network, schedule: CircuitSchedule, max_violations: int = 20,
             check_volume: bool = True) -> Verdict:
    """Check capacities at every breakpoint, releases, paths and delivered volumes"""
    violations: List[Violation] = []
    active: List[FlowAllocation] = []

    for a in schedule.allocations:
        if a.flow.dummy:
            continue
        name = key_str(a.key)
        if a.path.source != a.flow.src or a.path.sink != a.flow.dst or any(
                not network.has_arc(u, v) for u, v in a.path.arcs):
            violations.append(Violation(kind="path", flow=name))
            continue
        start = a.profile.first_active()
        if start is not None and start < a.flow.release - TOL:
            violations.append(Violation(kind="release", flow=name, time=start, limit=a.flow.release))
        if check_volume:
            delivered = a.profile.volume()
            if abs(delivered - a.flow.size) > TOL * max(1.0, a.flow.size):
                violations.append(Violation(kind="volume", flow=name, amount=delivered, limit=a.flow.size))
        active.append(a)

    for t, arc, load in _sweep(active):
        cap = network.capacity(*arc)
        if load > cap + TOL * max(1.0, cap):
            violations.append(Violation(kind="capacity", time=t, arc=f"{arc[0]}->{arc[1]}",
                                        amount=load, limit=cap))

    violations.sort(key=lambda v: (v.time if v.time is not None else -1.0))
    return Verdict(feasible=not violations, violations=violations[:max_violations])


def evaluate(instance: Instance, schedule: CircuitSchedule) -> ScheduleReport:
    """Completion times, coflow completions and the weighted objective"""
    allocations = schedule.by_key()
    completions: Dict[str, float] = {}
    coflow_completions: Dict[int, float] = {}

    for key, flow in instance.real_flows():
        if flow.size == 0:
            c = flow.release
        elif key in allocations:
            c = allocations[key].profile.completion(flow.size)
        else:
            c = math.inf
        completions[key_str(key)] = c
        coflow_completions[key[0]] = max(coflow_completions.get(key[0], 0.0), c)

    for i, coflow in enumerate(instance.coflows):
        coflow_completions.setdefault(i, 0.0)

    objective = sum(instance.coflows[i].weight * c for i, c in coflow_completions.items()
                    if instance.coflows[i].weight > 0)
    verdict = validate(instance.network, schedule)
    finite = all(math.isfinite(c) for c in completions.values())
    return ScheduleReport(
        completions=completions,
        coflow_completions=coflow_completions,
        objective=objective,
        feasible=verdict.feasible and finite,
        violations=verdict.violations,
        stretch=schedule.stretch,
    )
