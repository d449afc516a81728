import logging
import time
from pathlib import Path
from typing import Dict, List, Literal, Optional

import pandas as pd
from pydantic import BaseModel, Field

from app.core.config import settings
from app.core.database import SessionLocal, BenchResult, BenchRun
from app.core.errors import CoflowError
from app.core.generator import GenParams, gen_instance
from app.core.schemes import SCHEMES, improvement, run_scheme

logger = logging.getLogger(__name__)

REFERENCE = "lp-based"


class RunConfig(BaseModel):
    """One benchmark sweep: either the coflow count or the coflow width varies"""
    sweep: Literal["coflows", "width"] = "coflows"
    values: List[int] = Field(default_factory=lambda: [10, 15, 20, 25], min_length=1)
    coflows: int = Field(default=10, ge=1)
    width: int = Field(default=4, ge=1)
    fat_tree_k: int = Field(default_factory=lambda: settings.GEN_FAT_TREE_K, ge=2)
    repetitions: int = Field(default=10, ge=1)
    seed: int = 0
    mode: Literal["paths-free", "paths-given"] = "paths-free"
    schemes: List[str] = Field(default_factory=lambda: list(SCHEMES))
    output_dir: Optional[str] = None


class BenchEngine:
    def run_bench(self, config: RunConfig) -> Dict:
        """Generate, run every scheme on the same instance, aggregate per cell"""
        # 1. Expand the sweep into (cell, repetition) jobs; each repetition pins one seed
        jobs = []
        for value in config.values:
            n = value if config.sweep == "coflows" else config.coflows
            w = value if config.sweep == "width" else config.width
            for rep in range(config.repetitions):
                jobs.append((value, rep, n, w, config.seed + rep))

        # 2. Run them in order
        chunks = [self._run_cell(config, *job) for job in jobs]
        rows = [row for chunk in chunks for row in chunk]

        # 3. Aggregate
        results = pd.DataFrame(rows)
        summary = self.summarize(results, config.sweep)
        failures = int(results["error"].notna().sum()) if not results.empty else 0
        out = {
            "parameters": config.model_dump(),
            "rows": rows,
            "summary": summary.astype(object).where(summary.notna(), None).to_dict(orient="records"),
            "failures": failures,
        }
        if config.output_dir:
            self.write_tables(out, config)
        logger.info("[BENCH] sweep %s over %s: %d rows, %d failures", config.sweep, config.values, len(rows), failures)
        return out

    def _run_cell(self, config: RunConfig, value: int, rep: int, n: int, w: int, seed: int) -> List[Dict]:
        cell = f"{config.sweep}={value}"
        params = GenParams(fat_tree_k=config.fat_tree_k, coflows=n, width=w, seed=seed, mode=config.mode)
        try:
            instance = gen_instance(params)
        except CoflowError as e:
            logger.warning("[BENCH] cell %s rep %d: generation failed: %s", cell, rep, e)
            return [self._row(cell, value, rep, seed, s, error=str(e)) for s in config.schemes]

        rows = []
        for scheme in config.schemes:
            started = time.perf_counter()
            try:
                _, report = run_scheme(instance, scheme, seed)
            except CoflowError as e:
                logger.warning("[BENCH] cell %s rep %d scheme %s failed: %s", cell, rep, scheme, e)
                rows.append(self._row(cell, value, rep, seed, scheme, error=str(e)))
                continue
            rows.append(self._row(cell, value, rep, seed, scheme, objective=report.objective,
                                  makespan=report.makespan, stretch=report.stretch,
                                  lp_objective=report.lp_objective,
                                  wall_time=time.perf_counter() - started))
        return rows

    @staticmethod
    def _row(cell, value, rep, seed, scheme, objective=None, makespan=None, stretch=None,
             lp_objective=None, wall_time=0.0, error=None) -> Dict:
        return {"cell": cell, "value": value, "repetition": rep, "seed": seed, "scheme": scheme,
                "objective": objective, "makespan": makespan, "stretch": stretch,
                "lp_objective": lp_objective, "wall_time": wall_time, "error": error}

    @staticmethod
    def summarize(results: pd.DataFrame, sweep: str = "coflows") -> pd.DataFrame:
        """Mean objective per cell and scheme, the LP value and the improvement of the LP scheme"""
        if results.empty:
            return pd.DataFrame()
        ok = results[results["error"].isna()]
        table = ok.pivot_table(index="value", columns="scheme", values="objective", aggfunc="mean")
        lp = ok[ok["scheme"] == REFERENCE].groupby("value")["lp_objective"].mean()
        table["lp_objective"] = lp
        if REFERENCE in table.columns:
            for scheme in [c for c in table.columns if c not in (REFERENCE, "lp_objective")]:
                table[f"improvement_{scheme}"] = [improvement(a, b) for a, b in zip(table[REFERENCE], table[scheme])]
        table.index.name = sweep
        return table.reset_index()

    @staticmethod
    def write_tables(result: Dict, config: RunConfig):
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(result["rows"]).to_csv(out / f"bench_{config.sweep}_rows.csv", index=False)
        pd.DataFrame(result["summary"]).to_csv(out / f"bench_{config.sweep}_summary.csv", index=False)

    def save_results(self, result: Dict) -> int:
        db = SessionLocal()
        try:
            run = BenchRun(
                sweep=result["parameters"]["sweep"],
                parameters=result["parameters"],
                cells=len(result["summary"]),
                failures=result["failures"],
            )
            db.add(run)
            db.commit()
            db.refresh(run)

            for r in result["rows"]:
                db.add(BenchResult(
                    run_id=run.id,
                    cell=r["cell"],
                    repetition=r["repetition"],
                    seed=r["seed"],
                    scheme=r["scheme"],
                    objective=r["objective"],
                    makespan=r["makespan"],
                    stretch=r["stretch"],
                    lp_objective=r["lp_objective"],
                    wall_time=r["wall_time"],
                    error=r["error"],
                ))
            db.commit()

            # Keep the last 100 runs
            max_runs = 100
            total_runs = db.query(BenchRun).count()
            if total_runs > max_runs:
                old_runs = db.query(BenchRun).order_by(BenchRun.timestamp.asc()).limit(total_runs - max_runs).all()
                for old_run in old_runs:
                    db.query(BenchResult).filter(BenchResult.run_id == old_run.id).delete()
                    db.delete(old_run)
                db.commit()

            return run.id
        finally:
            db.close()


bench_engine = BenchEngine()
