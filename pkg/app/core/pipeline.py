import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

from app.core.circuit import (CongestionReport, RoundingParams, schedule_congestion, schedule_routing,
                              solve_given_paths)
from app.core.errors import InstanceError
from app.core.model import CircuitSchedule, Instance, Mode, ScheduleReport, key_str
from app.core.packet import PacketSchedule, schedule_packets

logger = logging.getLogger(__name__)


@dataclass
class PipelineResult:
    mode: Mode
    report: ScheduleReport
    schedule: Optional[CircuitSchedule] = None
    packets: Optional[PacketSchedule] = None
    congestion: Optional[CongestionReport] = None

    def to_dict(self) -> Dict:
        out = {"mode": self.mode, "report": self.report.model_dump(mode="json")}
        if self.schedule is not None:
            out["schedule"] = self.schedule.model_dump(mode="json")
        if self.packets is not None:
            out["trace"] = self.packets.rows()
        if self.congestion is not None:
            out["congestion"] = self.congestion.model_dump()
        return out


def run_pipeline(instance: Instance, mode: Optional[Mode] = None, params: Optional[RoundingParams] = None,
                 seed: int = 0, given_paths: bool = False, use_lp: bool = True,
                 horizon: Optional[int] = None, lp_dump: Optional[str] = None) -> PipelineResult:
    """Pick the scheduler that matches the instance mode (or an explicit override)"""
    mode = mode or instance.mode
    if mode == "paths-given":
        _require_paths(instance)
        schedule, report = solve_given_paths(instance, params, lp_dump=lp_dump)
        return PipelineResult(mode, report, schedule=schedule,
                              congestion=schedule_congestion(instance.network, schedule))
    if mode == "paths-free":
        outcome = schedule_routing(instance, seed=seed, lp_dump=lp_dump)
        return PipelineResult(mode, outcome.report, schedule=outcome.schedule, congestion=outcome.congestion)
    if mode == "packet":
        if given_paths:
            _require_paths(instance)
        packets, report = schedule_packets(instance, seed=seed, given_paths=given_paths, use_lp=use_lp,
                                           horizon=horizon, lp_dump=lp_dump)
        congestion = CongestionReport.from_loads(
            instance.network, {arc: float(n) for arc, n in packets.arc_counts().items()},
            {key_str(k): 1 for k in packets.traces})
        return PipelineResult(mode, report, packets=packets, congestion=congestion)
    raise InstanceError(f"unknown mode {mode!r}")


def _require_paths(instance: Instance):
    missing: List[str] = [key_str(k) for k, f in instance.real_flows() if f.path is None]
    if missing:
        raise InstanceError(f"flows without a path: {', '.join(missing[:5])}")
