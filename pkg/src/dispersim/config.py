"""Run configuration: flat sectioned key-value files and the figure presets.

All rates are in units of kappa, times in 1/kappa, angles in radians.  Every
field has a typed default; unknown sections or keys are rejected with a
field-level message so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import configparser
import io as _io
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import quantum
from .ensemble import DEFAULT_MASTER_SEED
from .model import DriveProfile, SystemParams


class ConfigError(ValueError):
    """Invalid or unparseable run configuration."""


INITIAL_STATES = {
    "product_plus": quantum.product_plus,
    "phi_plus": quantum.phi_plus,
    "phi_minus": quantum.phi_minus,
    "psi_plus": quantum.psi_plus,
    "psi_minus": quantum.psi_minus,
    "gg": lambda: quantum.basis_state("gg"),
    "ge": lambda: quantum.basis_state("ge"),
    "eg": lambda: quantum.basis_state("eg"),
    "ee": lambda: quantum.basis_state("ee"),
}


@dataclass
class SystemSection:
    kappa: float = 1.0
    g1: float = -100.0
    g2: float = 100.0
    delta_qc1: float = 1000.0
    delta_qc2: float = 1000.0
    delta_r: float = 0.0
    gamma1_1: float = 0.0
    gamma1_2: float = 0.0
    gamma_phi1: float = 0.0
    gamma_phi2: float = 0.0
    eta: float = 1.0
    phi_lo: float = float(np.pi / 2)


@dataclass
class DriveSection:
    shape: str = "tanh"
    eps: float = 1.0
    sigma: float = 1.0


@dataclass
class RunSection:
    t_final: float = 10.0
    dt: float = 1e-3
    n_traj: int = 2000
    store_every: int = 50
    master_seed: int = DEFAULT_MASTER_SEED
    workers: int = 0  # 0 selects the available core count
    include_purcell: bool = True
    initial_state: str = "product_plus"
    traj_index: int = 0


@dataclass
class RatesSection:
    delta_r_min: float = -6.0
    delta_r_max: float = 6.0
    delta_r_steps: int = 241
    phi_steps: int = 181


@dataclass
class HistogramSection:
    times: tuple[float, ...] = (1.6, 6.3)
    fit_t_min: float = 2.0
    fit_t_max: float = 6.0
    fit_t_step: float = 0.5


@dataclass
class ThresholdSection:
    s_th_max: float = 8.0
    s_th_steps: int = 33


@dataclass
class OracleSection:
    fock_cutoff: int = 0  # 0 sizes the cutoff from the drive strength
    t_final: float = 5.0
    dt: float = 2e-4


@dataclass
class RunConfig:
    """Everything a command needs, grouped by section."""

    system: SystemSection = field(default_factory=SystemSection)
    drive: DriveSection = field(default_factory=DriveSection)
    run: RunSection = field(default_factory=RunSection)
    rates: RatesSection = field(default_factory=RatesSection)
    histogram: HistogramSection = field(default_factory=HistogramSection)
    threshold: ThresholdSection = field(default_factory=ThresholdSection)
    oracle: OracleSection = field(default_factory=OracleSection)

    def to_params(self) -> SystemParams:
        s, d = self.system, self.drive
        try:
            return SystemParams(
                kappa=s.kappa,
                g=(s.g1, s.g2),
                delta_qc=(s.delta_qc1, s.delta_qc2),
                delta_r=s.delta_r,
                gamma1=(s.gamma1_1, s.gamma1_2),
                gamma_phi=(s.gamma_phi1, s.gamma_phi2),
                eta=s.eta,
                phi_lo=s.phi_lo,
                drive=DriveProfile(shape=d.shape, eps=d.eps, sigma=d.sigma),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def initial_rho(self) -> np.ndarray:
        try:
            psi = INITIAL_STATES[self.run.initial_state]()
        except KeyError:
            raise ConfigError(
                f"run.initial_state must be one of {sorted(INITIAL_STATES)}, "
                f"got {self.run.initial_state!r}"
            ) from None
        return quantum.density(psi)

    def effective_workers(self) -> int | None:
        return None if self.run.workers == 0 else self.run.workers

    def validate(self) -> None:
        r = self.run
        if r.t_final <= 0 or r.dt <= 0:
            raise ConfigError("run.t_final and run.dt must be positive")
        if r.n_traj < 1:
            raise ConfigError("run.n_traj must be at least 1")
        if r.store_every < 1:
            raise ConfigError("run.store_every must be at least 1")
        if r.workers < 0:
            raise ConfigError("run.workers must be 0 (auto) or positive")
        if r.master_seed < 0 or r.master_seed > 2**64 - 1:
            raise ConfigError("run.master_seed must fit in 64 bits")
        if self.threshold.s_th_max < 0 or self.threshold.s_th_steps < 1:
            raise ConfigError("threshold section values out of range")
        if self.oracle.fock_cutoff < 0:
            raise ConfigError("oracle.fock_cutoff must be 0 (auto) or positive")
        self.to_params()
        self.initial_rho()

    def as_dict(self) -> dict:
        return asdict(self)


_SECTION_TYPES = {
    "system": SystemSection,
    "drive": DriveSection,
    "run": RunSection,
    "rates": RatesSection,
    "histogram": HistogramSection,
    "threshold": ThresholdSection,
    "oracle": OracleSection,
}


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return " ".join(repr(float(v)) for v in value)
    return str(value)


def _parse_value(raw: str, target_type, where: str):
    raw = raw.strip()
    try:
        if target_type is bool:
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
        if target_type is str:
            return raw
        if target_type == tuple[float, ...]:
            return tuple(float(tok) for tok in raw.split())
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}: unsupported config field type {target_type}")


def dumps(config: RunConfig) -> str:
    """Serialize to the sectioned key-value text format (lossless)."""
    parser = configparser.ConfigParser()
    for section_name, section_type in _SECTION_TYPES.items():
        section = getattr(config, section_name)
        parser[section_name] = {
            f.name: _format_value(getattr(section, f.name)) for f in fields(section_type)
        }
    buf = _io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def loads(text: str) -> RunConfig:
    """Parse the sectioned key-value format, rejecting unknown keys."""
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unparseable config: {exc}") from None
    config = RunConfig()
    for section_name in parser.sections():
        if section_name not in _SECTION_TYPES:
            raise ConfigError(f"unknown config section [{section_name}]")
        section_type = _SECTION_TYPES[section_name]
        known = {f.name: f for f in fields(section_type)}
        section = getattr(config, section_name)
        for key, raw in parser[section_name].items():
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in section [{section_name}]")
            hint = section_type.__dataclass_fields__[key].type
            target = {"float": float, "int": int, "bool": bool, "str": str}.get(
                hint, tuple[float, ...] if "tuple" in str(hint) else hint
            )
            setattr(
                section, key, _parse_value(raw, target, f"[{section_name}] {key}")
            )
    config.validate()
    return config


def save(config: RunConfig, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(config))


def load(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read config file {path}: {exc}") from exc
    return loads(text)


def preset_fig1() -> RunConfig:
    """Weak-drive rate geometry: chi = 1.5, eps = 0.5, opposite-sign couplings."""
    cfg = RunConfig()
    cfg.system = SystemSection(g1=-15.0, g2=15.0, delta_qc1=150.0, delta_qc2=150.0)
    cfg.drive = DriveSection(shape="constant", eps=0.5, sigma=1.0)
    cfg.run = RunSection(t_final=10.0, n_traj=500)
    cfg.rates = RatesSection(delta_r_min=-6.0, delta_r_max=6.0)
    return cfg


def preset_fig2() -> RunConfig:
    """Parity-measurement dynamics: chi = 10, ramped drive, ideal detection."""
    cfg = RunConfig()
    cfg.run = RunSection(t_final=18.0, n_traj=2000)
    cfg.rates = RatesSection(delta_r_min=-40.0, delta_r_max=40.0)
    return cfg


def preset_fig3() -> RunConfig:
    """Integrated-current histograms at ideal detection, no damping."""
    cfg = RunConfig()
    cfg.run = RunSection(t_final=6.4, n_traj=10000, store_every=100)
    return cfg


def preset_fig4() -> RunConfig:
    """Threshold classification with damping and realistic efficiency."""
    cfg = RunConfig()
    cfg.system = SystemSection(
        gamma1_1=1.0 / 250.0, gamma1_2=1.0 / 250.0, eta=0.05
    )
    cfg.run = RunSection(t_final=18.5, n_traj=10000, store_every=100)
    return cfg


PRESETS = {
    "fig1": preset_fig1,
    "fig2": preset_fig2,
    "fig3": preset_fig3,
    "fig4": preset_fig4,
}


def preset(name: str) -> RunConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; available: {sorted(PRESETS)}"
        ) from None
