"""HTTP surface for the scheduler: the eleven workflow-scheduling endpoints."""

from __future__ import annotations

import logging
import threading
from contextlib import asynccontextmanager
from typing import Optional

from fastapi import Body, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from starlette.exceptions import HTTPException as StarletteHTTPException

from cws.api.schemas import (
    Added,
    BatchResponse,
    DeleteSummary,
    Edge,
    ErrorBody,
    Grant,
    RegisterRequest,
    RegisterResponse,
    Removed,
    TaskStateResponse,
    TaskSubmission,
    Vertex,
    WithdrawResponse,
)
from cws.clock import PacedClock
from cws.cluster import ClusterConfig
from cws.errors import CwsError
from cws.service import API_VERSION, SchedulerService, check_version
from cws.simulator import ClusterSimulator, build_system

log = logging.getLogger(__name__)

_ERRORS = {400: {"model": ErrorBody}, 404: {"model": ErrorBody}, 409: {"model": ErrorBody}}


class ClockDriver:
    """Background thread that applies simulator events as paced time reaches them."""

    def __init__(self, simulator: ClusterSimulator, lock, tick_s: float = 0.002):
        self.simulator = simulator
        self.lock = lock
        self.tick_s = tick_s
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def start(self) -> None:
        if self._thread is None:
            self._thread = threading.Thread(target=self._run, name="cws-clock", daemon=True)
            self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2)
            self._thread = None

    def _run(self) -> None:
        while not self._stop.is_set():
            try:
                with self.lock:
                    self.simulator.process_due()
            except Exception:  # keep the service alive; the failure is logged
                log.exception("simulator event failed")
            self._stop.wait(self.tick_s)


def create_app(service: SchedulerService, driver: Optional[ClockDriver] = None) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if driver is not None:
            driver.start()
        try:
            yield
        finally:
            if driver is not None:
                driver.stop()

    app = FastAPI(
        title="Common workflow scheduler",
        version="1.0.0",
        openapi_url=f"/{API_VERSION}/openapi.json",
        docs_url=f"/{API_VERSION}/docs",
        redoc_url=None,
        lifespan=lifespan,
    )
    app.state.service = service
    app.state.driver = driver

    @app.exception_handler(CwsError)
    async def _cws_error(request: Request, exc: CwsError):
        return JSONResponse(status_code=exc.http_status,
                            content={"code": exc.code, "message": exc.message})

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        parts = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err.get("loc", ()))
            parts.append(f"{loc}: {err.get('msg')}")
        return JSONResponse(status_code=400,
                            content={"code": "INVALID_REQUEST", "message": "; ".join(parts)})

    @app.exception_handler(StarletteHTTPException)
    async def _http_error(request: Request, exc: StarletteHTTPException):
        code = {404: "NOT_FOUND", 405: "METHOD_NOT_ALLOWED"}.get(exc.status_code, "HTTP_ERROR")
        return JSONResponse(status_code=exc.status_code,
                            content={"code": code, "message": str(exc.detail)})

    base = "/{version}/{execution}"

    @app.post(base, response_model=RegisterResponse, responses=_ERRORS)
    def register_execution(version: str, execution: str, body: RegisterRequest):
        check_version(version)
        return service.register(execution, body.strategy, body.seed)

    @app.delete(base, response_model=DeleteSummary, responses=_ERRORS)
    def delete_execution(version: str, execution: str):
        check_version(version)
        return service.delete(execution)

    @app.post(base + "/DAG/vertices", response_model=Added, responses=_ERRORS)
    def add_vertices(version: str, execution: str, body: list[Vertex] = Body(...)):
        check_version(version)
        return service.add_vertices(execution, [v.model_dump() for v in body])

    @app.delete(base + "/DAG/vertices", response_model=Removed, responses=_ERRORS)
    def remove_vertices(version: str, execution: str, body: list[str] = Body(...)):
        check_version(version)
        return service.remove_vertices(execution, body)

    @app.post(base + "/DAG/edges", response_model=Added, responses=_ERRORS)
    def add_edges(version: str, execution: str, body: list[Edge] = Body(...)):
        check_version(version)
        return service.add_edges(execution, [e.model_dump(by_alias=True) for e in body])

    @app.delete(base + "/DAG/edges", response_model=Removed, responses=_ERRORS)
    def remove_edges(version: str, execution: str, body: list[Edge] = Body(...)):
        check_version(version)
        return service.remove_edges(execution, [e.model_dump(by_alias=True) for e in body])

    @app.put(base + "/startBatch", response_model=BatchResponse,
             response_model_exclude_none=True, responses=_ERRORS)
    def start_batch(version: str, execution: str):
        check_version(version)
        return service.start_batch(execution)

    @app.put(base + "/endBatch", response_model=BatchResponse, responses=_ERRORS)
    def end_batch(version: str, execution: str):
        check_version(version)
        return service.end_batch(execution)

    @app.post(base + "/task/{task_id}", response_model=Grant, responses=_ERRORS)
    def submit_task(version: str, execution: str, task_id: str, body: TaskSubmission):
        check_version(version)
        return service.submit_task(execution, task_id, body.model_dump())

    @app.get(base + "/task/{task_id}", response_model=TaskStateResponse,
             response_model_exclude_none=True, responses=_ERRORS)
    def get_task(version: str, execution: str, task_id: str):
        check_version(version)
        return service.task_state(execution, task_id)

    @app.delete(base + "/task/{task_id}", response_model=WithdrawResponse, responses=_ERRORS)
    def withdraw_task(version: str, execution: str, task_id: str):
        check_version(version)
        return service.withdraw_task(execution, task_id)

    return app


def build_app(config: ClusterConfig, time_scale: float = 1.0, decision_log=None,
              tick_s: float = 0.002) -> FastAPI:
    """Service backed by a simulated cluster whose clock follows wall time."""
    clock = PacedClock(scale=time_scale)
    scheduler, simulator = build_system(config, clock=clock, decision_log=decision_log)
    driver = ClockDriver(simulator, scheduler.lock, tick_s=tick_s)
    app = create_app(SchedulerService(scheduler), driver)
    app.state.scheduler = scheduler
    app.state.simulator = simulator
    return app
