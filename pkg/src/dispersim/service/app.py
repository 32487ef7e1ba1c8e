"""HTTP service exposing the simulation pipelines.

Long-running commands go through the job store; cheap queries are served
inline.  Error payloads carry an ``error_kind`` of config, quality, io, or
internal so clients can map failures to exit codes.
"""

from __future__ import annotations

import os

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import FileResponse, JSONResponse

from .. import __version__
from ..config import PRESETS, ConfigError, preset
from ..experiments import steady_summary
from ..io import _jsonable
from .jobs import Job, JobStore
from .schemas import ConfigRequest, FileList, HealthResponse, JobInfo, JobRequest


def _job_info(job: Job) -> JobInfo:
    return JobInfo(
        id=job.id,
        kind=job.kind,
        status=job.status,
        error_kind=job.error_kind,
        error_message=job.error_message,
        summary=job.summary,
    )


def _error(status_code: int, kind: str, message: str) -> HTTPException:
    return HTTPException(status_code, {"error_kind": kind, "message": message})


def create_app(store: JobStore | None = None) -> FastAPI:
    app = FastAPI(title="dispersim", version=__version__)
    app.state.store = store or JobStore()

    @app.exception_handler(ConfigError)
    async def _config_error(request, exc: ConfigError):
        return JSONResponse(
            status_code=400,
            content={"detail": {"error_kind": "config", "message": str(exc)}},
        )

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.get("/presets")
    def list_presets() -> list[str]:
        return sorted(PRESETS)

    @app.get("/presets/{name}")
    def get_preset(name: str) -> dict:
        if name not in PRESETS:
            raise _error(404, "config", f"unknown preset {name!r}")
        return preset(name).as_dict()

    @app.post("/steady-rates")
    def steady_rates(request: ConfigRequest) -> dict:
        return _jsonable(steady_summary(request.resolve()))

    @app.post("/jobs", response_model=JobInfo)
    def submit_job(request: JobRequest, wait: bool = Query(default=False)):
        cfg = request.resolve()
        job = app.state.store.submit(request.kind, cfg)
        if wait:
            job.wait()
        return _job_info(job)

    @app.get("/jobs", response_model=list[JobInfo])
    def list_jobs():
        return [_job_info(job) for job in app.state.store.list()]

    def _get_job(job_id: str) -> Job:
        job = app.state.store.get(job_id)
        if job is None:
            raise _error(404, "config", f"no such job {job_id!r}")
        return job

    @app.get("/jobs/{job_id}", response_model=JobInfo)
    def job_status(job_id: str):
        return _job_info(_get_job(job_id))

    @app.get("/jobs/{job_id}/result")
    def job_result(job_id: str) -> dict:
        job = _get_job(job_id)
        if job.status in ("queued", "running"):
            raise _error(409, "config", f"job {job_id} is still {job.status}")
        if job.status == "error":
            raise _error(409, job.error_kind or "internal", job.error_message or "")
        return job.summary or {}

    @app.get("/jobs/{job_id}/files", response_model=FileList)
    def job_files(job_id: str):
        job = _get_job(job_id)
        return FileList(id=job.id, files=job.files())

    @app.get("/jobs/{job_id}/files/{name}")
    def job_file(job_id: str, name: str):
        job = _get_job(job_id)
        if name not in job.files():
            raise _error(404, "io", f"job {job_id} has no file {name!r}")
        return FileResponse(os.path.join(job.out_dir, name))

    return app
