import io

import pandas as pd
from fastapi import APIRouter, HTTPException
from fastapi.responses import StreamingResponse

from app.core.bench_engine import RunConfig, bench_engine
from app.core.database import SessionLocal, BenchResult, BenchRun

router = APIRouter(prefix="/bench", tags=["bench"])


@router.post("/run")
async def run_bench(config: RunConfig):
    result = bench_engine.run_bench(config)
    run_id = bench_engine.save_results(result)
    return {"run_id": run_id, "summary": result["summary"], "failures": result["failures"]}


@router.get("/history")
async def get_history(limit: int = 20):
    db = SessionLocal()
    try:
        runs = db.query(BenchRun).order_by(BenchRun.timestamp.desc()).limit(limit).all()
        return {"runs": [{
            "id": r.id,
            "sweep": r.sweep,
            "parameters": r.parameters,
            "cells": r.cells,
            "failures": r.failures,
            "timestamp": r.timestamp.isoformat() if r.timestamp else None,
        } for r in runs]}
    finally:
        db.close()


@router.get("/export/{run_id}")
async def export_run(run_id: int):
    db = SessionLocal()
    try:
        run = db.query(BenchRun).filter(BenchRun.id == run_id).first()
        if not run:
            raise HTTPException(status_code=404, detail=f"bench run {run_id} not found")
        results = db.query(BenchResult).filter(BenchResult.run_id == run_id).all()
        df = pd.DataFrame([{
            "cell": r.cell,
            "repetition": r.repetition,
            "seed": r.seed,
            "scheme": r.scheme,
            "objective": r.objective,
            "makespan": r.makespan,
            "stretch": r.stretch,
            "lp_objective": r.lp_objective,
            "wall_time": r.wall_time,
            "error": r.error,
        } for r in results])
    finally:
        db.close()

    stream = io.StringIO()
    df.to_csv(stream, index=False)
    return StreamingResponse(
        iter([stream.getvalue()]),
        media_type="text/csv",
        headers={"Content-Disposition": f"attachment; filename=bench_{run_id}.csv"},
    )


@router.delete("/clear")
async def clear_history():
    db = SessionLocal()
    try:
        db.query(BenchResult).delete()
        deleted = db.query(BenchRun).delete()
        db.commit()
        return {"deleted": deleted}
    finally:
        db.close()
