from typing import Any, Dict, Literal, Optional

from fastapi import APIRouter, HTTPException
from pydantic import BaseModel, ValidationError

from app.core.circuit import RoundingParams
from app.core.errors import CoflowError
from app.core.model import Instance, Mode
from app.core.pipeline import run_pipeline
from app.core.schemes import SCHEMES, run_scheme

router = APIRouter(tags=["solve"])


class SolveRequest(BaseModel):
    instance: Dict[str, Any]
    mode: Optional[Mode] = None
    alpha: Optional[float] = None
    displacement: Optional[int] = None
    epsilon: Optional[float] = None
    strict: bool = False
    seed: int = 0
    given_paths: bool = False
    horizon: Optional[int] = None


class SimulateRequest(BaseModel):
    instance: Dict[str, Any]
    scheme: Literal["baseline", "schedule-only", "route-only", "lp-based"] = "lp-based"
    seed: int = 0


def _instance(doc: Dict[str, Any]) -> Instance:
    try:
        return Instance.model_validate(doc)
    except (ValidationError, CoflowError, ValueError) as e:
        raise HTTPException(status_code=400, detail=f"bad instance: {e}")


@router.post("/solve")
async def solve(req: SolveRequest):
    instance = _instance(req.instance)
    overrides = {"alpha": req.alpha, "displacement": req.displacement, "epsilon": req.epsilon}
    try:
        params = RoundingParams(seed=req.seed, strict=req.strict,
                                **{k: v for k, v in overrides.items() if v is not None})
        result = run_pipeline(instance, req.mode, params, seed=req.seed,
                              given_paths=req.given_paths, horizon=req.horizon)
    except (ValidationError, CoflowError) as e:
        raise HTTPException(status_code=400, detail=str(e))
    return result.to_dict()


@router.post("/simulate")
async def simulate(req: SimulateRequest):
    instance = _instance(req.instance)
    try:
        schedule, report = run_scheme(instance, req.scheme, req.seed)
    except CoflowError as e:
        raise HTTPException(status_code=400, detail=str(e))
    return {"scheme": req.scheme, "report": report.model_dump(mode="json"),
            "schedule": schedule.model_dump(mode="json")}


@router.get("/schemes")
async def list_schemes():
    return {"schemes": sorted(SCHEMES)}
