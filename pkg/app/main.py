from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from app.api.v1 import router as api_v1_router
from app.core.config import configure_logging, settings

configure_logging()

app = FastAPI(title="Coflow Scheduler")

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(api_v1_router)


@app.api_route("/", methods=["GET", "HEAD"])
async def health():
    return {
        "service": "coflow-scheduler",
        "status": "ok",
        "lp_backend": settings.LP_BACKEND,
        "modes": ["paths-given", "paths-free", "packet"],
    }


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)
