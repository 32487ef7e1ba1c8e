"""HTTP service wrapping the simulation pipelines."""

from .app import create_app
from .jobs import Job, JobStore

__all__ = ["create_app", "Job", "JobStore"]
