from fastapi import APIRouter
from app.api.v1 import bench, solve

router = APIRouter(prefix="/api/v1")

router.include_router(solve.router)
router.include_router(bench.router)
