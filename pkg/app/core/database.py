from sqlalchemy import create_engine, Column, Integer, String, Float, DateTime, ForeignKey, JSON
from sqlalchemy.orm import declarative_base, sessionmaker
from datetime import datetime
import os

from app.core.config import settings

DB_URL = settings.BENCH_DB_URL
if DB_URL.startswith("sqlite:///") and not DB_URL.startswith("sqlite:///:memory:"):
    os.makedirs(os.path.dirname(DB_URL[len("sqlite:///"):]) or ".", exist_ok=True)

engine = create_engine(DB_URL, connect_args={"check_same_thread": False} if DB_URL.startswith("sqlite") else {})
SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)
Base = declarative_base()


class BenchRun(Base):
    __tablename__ = "bench_runs"

    id = Column(Integer, primary_key=True, index=True)
    sweep = Column(String)
    parameters = Column(JSON)
    cells = Column(Integer)
    failures = Column(Integer)
    timestamp = Column(DateTime, default=datetime.utcnow)


class BenchResult(Base):
    __tablename__ = "bench_results"

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey("bench_runs.id"))
    cell = Column(String)
    repetition = Column(Integer)
    seed = Column(Integer)
    scheme = Column(String)
    objective = Column(Float)
    makespan = Column(Float)
    stretch = Column(Float)
    lp_objective = Column(Float, nullable=True)
    wall_time = Column(Float)
    error = Column(String, nullable=True)


Base.metadata.create_all(bind=engine)
