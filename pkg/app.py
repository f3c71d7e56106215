import logging
from datetime import datetime
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from bench.routers import router as bench_router
from core.config import settings
from core.exceptions import LocalizationError
from core.performance_monitor import log_memory, memory_usage, monitor
from core.utils import setup_logging

VERSION = "0.1.0"

setup_logging()
logger = logging.getLogger(__name__)


def solver_defaults() -> dict:
    return {
        "gamma": settings.gamma,
        "rho": settings.rho,
        "method": settings.method,
        "tau": settings.tau,
        "horizon": settings.horizon,
        "settle_tol": settings.settle_tol,
        "max_horizon": settings.max_horizon,
        "propagation_speed": settings.propagation_speed,
    }


@asynccontextmanager
async def lifespan(app: FastAPI):
    logger.info(f"🚀 nlos-locator {VERSION} starting, solver defaults {solver_defaults()}")
    log_memory("startup")
    yield
    solves = monitor.get_stats("pnn_solve")
    if solves:
        logger.info(f"⏱️ {solves['count']} solves served, mean {solves['mean']:.3f}s")
    logger.info("🧹 nlos-locator stopped")


app = FastAPI(
    title="NLOS-Robust TDOA Localization API",
    version=VERSION,
    lifespan=lifespan
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(bench_router)


@app.get("/health")
async def health_check():
    return {
        "status": "healthy",
        "timestamp": datetime.now().isoformat(),
        "version": VERSION,
        "solver": solver_defaults(),
    }


@app.get("/stats")
async def solver_stats():
    """求解耗时统计与进程内存"""
    return {
        "pnn_solve": monitor.get_stats("pnn_solve"),
        "memory": memory_usage(),
    }


@app.exception_handler(LocalizationError)
async def localization_error_handler(request: Request, exc: LocalizationError):
    logger.warning(f"⚠️ {request.url.path}: {exc}")
    return JSONResponse(status_code=422, content={"detail": str(exc)})


@app.exception_handler(Exception)
async def global_exception_handler(request: Request, exc: Exception):
    logger.exception(f"❌ Unhandled error on {request.url.path}: {exc}")
    return JSONResponse(
        status_code=500,
        content={"error": "Internal server error", "status": "error"}
    )
