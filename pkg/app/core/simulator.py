"""Event-driven flow-level simulator.

Flows are started in the order a plan prescribes. Whenever a flow is released or
completes, every active flow is reallocated: walking the plan, each one grabs the
residual bottleneck capacity of its path (zero means it waits).
"""
import heapq
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, model_validator

from app.core.errors import SimulationError
from app.core.model import (TOL, BandwidthProfile, CircuitSchedule, FlowAllocation, FlowKey, Instance,
                            ScheduleReport, Segment, evaluate, key_str)
from app.core.network import Path, bottleneck

logger = logging.getLogger(__name__)


class PriorityPlan(BaseModel):
    """Total order over the real flows plus one path per flow"""
    order: List[FlowKey]
    paths: Dict[FlowKey, Path]
    scheme: str = "custom"
    lp_objective: Optional[float] = None
    lower_bound: Optional[float] = None

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check_cover(self):
        if len(set(self.order)) != len(self.order):
            raise ValueError("plan lists a flow twice")
        if set(self.order) != set(self.paths):
            raise ValueError("plan order and plan paths cover different flows")
        return self

    def check(self, instance: Instance):
        keys = {k for k, _ in instance.real_flows()}
        if set(self.order) != keys:
            missing = sorted(keys - set(self.order))
            raise SimulationError(f"plan does not cover flows {[key_str(k) for k in missing][:5]}")
        for key in self.order:
            flow = instance.flow(key)
            path = instance.network.path(self.paths[key].nodes, flow.src, flow.dst)
            if bottleneck(instance.network, path) <= 0:
                raise SimulationError(f"flow {key_str(key)} path {path} has a zero-capacity arc")


@dataclass(order=True, frozen=True)
class SimEvent:
    time: float
    kind: Literal["completion", "release"]
    key: FlowKey
    generation: int = 0


def _allocate(instance: Instance, plan: PriorityPlan, active: Sequence[FlowKey]) -> Dict[FlowKey, float]:
    residual: Dict[Tuple[str, str], float] = {}
    rates: Dict[FlowKey, float] = {}
    for key in active:
        arcs = plan.paths[key].arcs
        for arc in arcs:
            residual.setdefault(arc, instance.network.capacity(*arc))
        rate = min(residual[arc] for arc in arcs)
        if rate <= TOL:
            rates[key] = 0.0
            continue
        for arc in arcs:
            residual[arc] -= rate
        rates[key] = rate
    return rates


def simulate(instance: Instance, plan: PriorityPlan) -> Tuple[CircuitSchedule, ScheduleReport]:
    plan.check(instance)
    rank = {key: n for n, key in enumerate(plan.order)}
    remaining: Dict[FlowKey, float] = {}
    segments: Dict[FlowKey, List[Segment]] = {key: [] for key in plan.order}
    rates: Dict[FlowKey, float] = {}
    released: List[FlowKey] = []
    generation = 0

    queue: List[SimEvent] = []
    for key in plan.order:
        flow = instance.flow(key)
        if flow.size > 0:
            heapq.heappush(queue, SimEvent(flow.release, "release", key))

    now = 0.0
    steps = 0
    while queue:
        event = heapq.heappop(queue)
        if event.kind == "completion" and event.generation != generation:
            continue
        t = event.time

        # 1. Advance every running flow to t
        for key, rate in rates.items():
            if rate > 0 and t > now:
                remaining[key] -= rate * (t - now)
                segments[key].append(Segment(start=now, end=t, rate=rate))
        now = t

        # 2. Apply every event at this instant
        batch = [event]
        while queue and queue[0].time <= now + TOL:
            nxt = heapq.heappop(queue)
            if nxt.kind == "completion" and nxt.generation != generation:
                continue
            batch.append(nxt)
        for ev in batch:
            if ev.kind == "release":
                remaining[ev.key] = instance.flow(ev.key).size
                released.append(ev.key)
        for key in list(released):
            if remaining[key] <= TOL * max(1.0, instance.flow(key).size):
                released.remove(key)
                rates.pop(key, None)

        # 3. Reallocate in plan order and schedule the next completions
        active = sorted(released, key=rank.get)
        rates = _allocate(instance, plan, active)
        generation += 1
        for key, rate in rates.items():
            if rate > 0:
                heapq.heappush(queue, SimEvent(now + remaining[key] / rate, "completion", key, generation))
        steps += 1
        if released and not any(r > 0 for r in rates.values()):
            raise SimulationError(f"no flow can move at t={now:.6g}")

    allocations = []
    for key in plan.order:
        flow = instance.flow(key)
        profile = BandwidthProfile(segments=tuple(_merge(segments[key])))
        allocations.append(FlowAllocation(key=key, flow=flow, path=plan.paths[key], profile=profile))
    schedule = CircuitSchedule(allocations=allocations)
    report = evaluate(instance, schedule)
    report.notes.update({"scheme": plan.scheme, "events": float(steps)})
    if plan.lp_objective is not None:
        report = report.model_copy(update={"lp_objective": plan.lp_objective, "lower_bound": plan.lower_bound})
    if not report.feasible:
        raise SimulationError(f"simulated schedule fails validation: {report.violations[:1]}")
    logger.info("[SIM] %s: objective %.6g after %d events", plan.scheme, report.objective, steps)
    return schedule, report


def _merge(segments: List[Segment]) -> List[Segment]:
    out: List[Segment] = []
    for seg in segments:
        if seg.end - seg.start <= 0:
            continue
        if out and math.isclose(out[-1].rate, seg.rate) and abs(out[-1].end - seg.start) <= TOL:
            out[-1] = Segment(start=out[-1].start, end=seg.end, rate=out[-1].rate)
        else:
            out.append(seg)
    return out
