import logging

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    COFLOW_LOG: str = "WARNING"

    # Solver
    LP_FEAS_TOL: float = 1e-7
    LP_ITER_CAP: int = 1_000_000
    LP_BACKEND: str = "auto"  # auto | simplex | highs
    LP_DENSE_LIMIT: int = 250_000

    # Rounding defaults (given-paths pipeline)
    CIRCUIT_ALPHA: float = 0.5
    CIRCUIT_DISPLACEMENT: int = 3
    CIRCUIT_EPSILON: float = 0.5436

    PACKET_HORIZON_CAP: int = 128
    PACKET_STEP_ROWS: bool = True  # one packet per movement copy per step

    # Instance generator
    GEN_SIZE_MEAN: float = 10.0
    GEN_RELEASE_MEAN: float = 5.0
    GEN_WEIGHT_MEAN: float = 2.0
    GEN_FAT_TREE_K: int = Field(default=4, ge=2)

    BENCH_DB_URL: str = "sqlite:///logs/bench_results.db"
    OUTPUT_DIR: str = "out"

    model_config = SettingsConfigDict(env_file=".env", extra="ignore")


settings = Settings()


def configure_logging(level: str | None = None):
    """Set root verbosity from COFLOW_LOG (or an explicit override)"""
    name = (level or settings.COFLOW_LOG).upper()
    logging.basicConfig(
        level=getattr(logging, name, logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
