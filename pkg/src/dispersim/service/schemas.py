"""Request/response models for the HTTP service.

Config models mirror the INI sections; every field is optional so a request
can override any subset of a preset.  Unknown fields are rejected.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict

from ..config import PRESETS, ConfigError, RunConfig, preset

JobKind = Literal["rates", "me", "trajectory", "ensemble", "threshold", "oracle-check"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")

    def apply(self, section) -> None:
        for name, value in self.model_dump(exclude_unset=True).items():
            setattr(section, name, value)


class SystemModel(_Section):
    kappa: Optional[float] = None
    g1: Optional[float] = None
    g2: Optional[float] = None
    delta_qc1: Optional[float] = None
    delta_qc2: Optional[float] = None
    delta_r: Optional[float] = None
    gamma1_1: Optional[float] = None
    gamma1_2: Optional[float] = None
    gamma_phi1: Optional[float] = None
    gamma_phi2: Optional[float] = None
    eta: Optional[float] = None
    phi_lo: Optional[float] = None


class DriveModel(_Section):
    shape: Optional[str] = None
    eps: Optional[float] = None
    sigma: Optional[float] = None


class RunModel(_Section):
    t_final: Optional[float] = None
    dt: Optional[float] = None
    n_traj: Optional[int] = None
    store_every: Optional[int] = None
    master_seed: Optional[int] = None
    workers: Optional[int] = None
    include_purcell: Optional[bool] = None
    initial_state: Optional[str] = None
    traj_index: Optional[int] = None


class RatesModel(_Section):
    delta_r_min: Optional[float] = None
    delta_r_max: Optional[float] = None
    delta_r_steps: Optional[int] = None
    phi_steps: Optional[int] = None


class HistogramModel(_Section):
    times: Optional[tuple[float, ...]] = None
    fit_t_min: Optional[float] = None
    fit_t_max: Optional[float] = None
    fit_t_step: Optional[float] = None


class ThresholdModel(_Section):
    s_th_max: Optional[float] = None
    s_th_steps: Optional[int] = None


class OracleModel(_Section):
    fock_cutoff: Optional[int] = None
    t_final: Optional[float] = None
    dt: Optional[float] = None


class ConfigModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    system: Optional[SystemModel] = None
    drive: Optional[DriveModel] = None
    run: Optional[RunModel] = None
    rates: Optional[RatesModel] = None
    histogram: Optional[HistogramModel] = None
    threshold: Optional[ThresholdModel] = None
    oracle: Optional[OracleModel] = None

    def apply(self, cfg: RunConfig) -> None:
        for name in ("system", "drive", "run", "rates", "histogram",
                     "threshold", "oracle"):
            model = getattr(self, name)
            if model is not None:
                model.apply(getattr(cfg, name))


class ConfigRequest(BaseModel):
    """Preset name plus sparse overrides; the common request body."""

    model_config = ConfigDict(extra="forbid")

    preset: Optional[str] = None
    config: Optional[ConfigModel] = None
    master_seed: Optional[int] = None
    workers: Optional[int] = None

    def resolve(self) -> RunConfig:
        """Build and validate the effective config for this request."""
        if self.preset is not None:
            if self.preset not in PRESETS:
                raise ConfigError(
                    f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}"
                )
            cfg = preset(self.preset)
        else:
            cfg = RunConfig()
        if self.config is not None:
            self.config.apply(cfg)
        if self.master_seed is not None:
            cfg.run.master_seed = self.master_seed
        if self.workers is not None:
            cfg.run.workers = self.workers
        cfg.validate()
        return cfg


class JobRequest(ConfigRequest):
    kind: JobKind


class JobInfo(BaseModel):
    id: str
    kind: JobKind
    status: Literal["queued", "running", "done", "error"]
    error_kind: Optional[Literal["config", "quality", "io", "internal"]] = None
    error_message: Optional[str] = None
    summary: Optional[dict] = None


class FileList(BaseModel):
    id: str
    files: list[str]


class HealthResponse(BaseModel):
    status: str
    version: str
