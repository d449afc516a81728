"""JSON and CSV files for instances, schedules, reports and traces"""
import logging
from pathlib import Path
from typing import Dict, List, Type, TypeVar, Union

import pandas as pd
from pydantic import BaseModel, ValidationError

from app.core.circuit import CongestionReport
from app.core.errors import InstanceError, NetworkError
from app.core.model import CircuitSchedule, Instance, ScheduleReport, key_str
from app.core.network import Network, NetworkDocument

logger = logging.getLogger(__name__)

M = TypeVar("M", bound=BaseModel)
Stored = Union[Instance, CircuitSchedule, ScheduleReport]


def _diagnose(path, e: ValidationError) -> str:
    parts = []
    for err in e.errors()[:5]:
        where = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{where}: {err['msg']}")
    return f"{path}: " + "; ".join(parts)


def _read(path, model: Type[M]) -> M:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise InstanceError(f"cannot read {path}: {e}")
    try:
        return model.model_validate_json(text)
    except ValidationError as e:
        raise InstanceError(_diagnose(path, e))
    except (NetworkError, ValueError) as e:
        raise InstanceError(f"{path}: {e}")


def _write(path, obj: BaseModel) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(obj.model_dump_json(indent=2), encoding="utf-8")
    logger.debug("[IO] wrote %s", target)
    return target


def load_instance(path) -> Instance:
    return _read(path, Instance)


def save_instance(instance: Instance, path) -> Path:
    return _write(path, instance)


def load_schedule(path) -> CircuitSchedule:
    return _read(path, CircuitSchedule)


def save_schedule(schedule: CircuitSchedule, path) -> Path:
    return _write(path, schedule)


def load_report(path) -> ScheduleReport:
    return _read(path, ScheduleReport)


def save_report(report: ScheduleReport, path) -> Path:
    return _write(path, report)


def load_network(path) -> Network:
    doc = _read(path, NetworkDocument)
    try:
        return Network.from_document(doc)
    except NetworkError as e:
        raise InstanceError(f"{path}: {e}")


def io_roundtrip(obj: Stored, path) -> Stored:
    """Write ``obj`` to ``path`` and read it back as the same type"""
    _write(path, obj)
    return _read(path, type(obj))


def write_rows(rows: List[Dict], path, columns: List[str] = None) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows, columns=columns).to_csv(target, index=False)
    return target


def allocation_rows(schedule: CircuitSchedule) -> List[Dict]:
    """One row per constant-rate segment"""
    rows = []
    for a in schedule.allocations:
        for seg in a.profile.segments:
            rows.append({"flow": key_str(a.key), "path": "->".join(a.path.nodes),
                         "start": seg.start, "end": seg.end, "rate": seg.rate})
    return rows


def coflow_rows(instance: Instance, report: ScheduleReport) -> List[Dict]:
    """One row per coflow: weight, completion and weighted completion"""
    rows = []
    for i, coflow in enumerate(instance.coflows):
        completion = report.coflow_completions.get(i, 0.0)
        rows.append({"coflow": i, "weight": coflow.weight, "completion": completion,
                     "weighted_completion": coflow.weight * completion})
    return rows


def congestion_rows(congestion: CongestionReport) -> List[Dict]:
    """Per-arc load against capacity, then the number of candidate paths per flow"""
    rows = []
    for arc, load in congestion.loads.items():
        cap = congestion.capacities[arc]
        rows.append({"item": "arc", "name": arc, "load": load, "capacity": cap,
                     "congestion": load / cap, "paths": None})
    for flow, n in congestion.paths_per_flow.items():
        rows.append({"item": "flow", "name": flow, "load": None, "capacity": None,
                     "congestion": None, "paths": n})
    return rows
