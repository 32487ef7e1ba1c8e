"""In-process job store: each job runs one pipeline in a worker thread."""

from __future__ import annotations

import os
import tempfile
import threading
from dataclasses import dataclass, field

from ..config import ConfigError, RunConfig
from ..ensemble import SimulationQualityError
from ..experiments import PIPELINES


def classify_error(exc: BaseException) -> str:
    if isinstance(exc, ConfigError):
        return "config"
    if isinstance(exc, SimulationQualityError):
        return "quality"
    if isinstance(exc, OSError):
        return "io"
    return "internal"


@dataclass
class Job:
    id: str
    kind: str
    cfg: RunConfig
    out_dir: str
    status: str = "queued"
    error_kind: str | None = None
    error_message: str | None = None
    summary: dict | None = None
    thread: threading.Thread | None = field(default=None, repr=False)

    def wait(self, timeout: float | None = None) -> None:
        if self.thread is not None:
            self.thread.join(timeout)

    def files(self) -> list[str]:
        if not os.path.isdir(self.out_dir):
            return []
        return sorted(
            name
            for name in os.listdir(self.out_dir)
            if os.path.isfile(os.path.join(self.out_dir, name))
        )


class JobStore:
    """Threaded job registry writing outputs under one root directory."""

    def __init__(self, root: str | None = None):
        self.root = root or tempfile.mkdtemp(prefix="dispersim-jobs-")
        self._jobs: dict[str, Job] = {}
        self._lock = threading.Lock()
        self._counter = 0

    def submit(self, kind: str, cfg: RunConfig) -> Job:
        if kind not in PIPELINES:
            raise ConfigError(f"unknown command {kind!r}")
        with self._lock:
            self._counter += 1
            job_id = f"job-{self._counter:04d}"
            job = Job(id=job_id, kind=kind, cfg=cfg,
                      out_dir=os.path.join(self.root, job_id))
            self._jobs[job_id] = job
        job.thread = threading.Thread(target=self._run, args=(job,), daemon=True)
        job.thread.start()
        return job

    def _run(self, job: Job) -> None:
        job.status = "running"
        try:
            job.summary = PIPELINES[job.kind](job.cfg, job.out_dir)
        except BaseException as exc:
            job.error_kind = classify_error(exc)
            job.error_message = f"{type(exc).__name__}: {exc}"
            job.status = "error"
        else:
            job.status = "done"

    def get(self, job_id: str) -> Job | None:
        with self._lock:
            return self._jobs.get(job_id)

    def list(self) -> list[Job]:
        with self._lock:
            return list(self._jobs.values())
