"""Session configuration: dataclasses, JSON parsing, and key=value overrides.

Configs round-trip through a canonical document form (`to_doc`) used both
for hashing into session logs and for embedding so replays are
self-contained. Unknown keys are rejected everywhere; fat-fingered metadata
must not silently change a run.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any

from .serialize import canon_hash

DEFAULT_DT = 1.0 / 30.0


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EavConfig:
    mass_kg: float = 0.25
    gravity: float = 9.81
    drag_coeff: float = 0.0
    dt_s: float = DEFAULT_DT
    attitude_max_rad: float = 0.35
    thrust_headroom: float = 1.0
    yaw_rate_max: float = 1.0
    attitude_lag_s: float = 0.0


@dataclass(frozen=True)
class MountConfig:
    rpy_rad: tuple = (0.0, 0.0, 0.0)   # extra rotation on top of the nadir mount
    translation: tuple = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class VacConfig:
    width: int = 1280
    height: int = 720
    fov_h_deg: float | None = None     # None: inherit the manifest's FoV
    fov_v_deg: float | None = None
    yaw_follows_eav: bool = True


@dataclass(frozen=True)
class DisturbanceConfig:
    kind: str = "none"
    force: tuple = (0.0, 0.0, 0.0)
    std_n: float = 0.0
    corr_time_s: float = 1.0
    horizontal_only: bool = True


@dataclass(frozen=True)
class InitialConfig:
    kind: str = "fixed"                # fixed | randomized
    pos: tuple = (0.0, 0.0, 50.0)
    yaw: float = 0.0
    altitude_range: tuple = (50.0, 100.0)
    xy_bounds: tuple = ((0.0, 0.0), (0.0, 0.0))
    yaw_range: tuple = (0.0, 0.0)


@dataclass(frozen=True)
class StartFrameConfig:
    kind: str = "fixed"                # fixed | randomized
    index: int = 0


@dataclass(frozen=True)
class TerminationConfig:
    landing_altitude_m: float = 1.0
    max_ticks: int = 300
    out_of_bounds: str = "clamp"       # clamp | terminate


@dataclass(frozen=True)
class RenderSettings:
    sampling: str = "bilinear"
    fill: tuple = (0, 0, 0)
    upscaler: str = "bicubic"          # nearest | bilinear | bicubic | external:<cmd>
    upscaler_timeout_s: float = 10.0
    engage_threshold: float = 1.0
    sr_enabled: bool = True


@dataclass(frozen=True)
class GatewayConfig:
    endpoint: str = "127.0.0.1:8473"
    encoding: str = "rgb8"             # rgb8 | png
    lockstep_timeout_s: float = 10.0
    realtime_hold_s: float = 10.0
    overview: bool = False
    overview_width: int = 960


@dataclass(frozen=True)
class SessionConfig:
    manifest: str = ""
    seed: int | None = None
    eav: EavConfig = field(default_factory=EavConfig)
    mount: MountConfig = field(default_factory=MountConfig)
    vac: VacConfig = field(default_factory=VacConfig)
    disturbance: DisturbanceConfig = field(default_factory=DisturbanceConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    start_frame: StartFrameConfig = field(default_factory=StartFrameConfig)
    command_source: str = "hover"      # hover | scripted:<path> | replay:<path> | gateway
    termination: TerminationConfig = field(default_factory=TerminationConfig)
    render: RenderSettings = field(default_factory=RenderSettings)
    realtime: bool = False
    log_path: str | None = None
    gateway: GatewayConfig = field(default_factory=GatewayConfig)

    def to_doc(self) -> dict:
        return _to_doc(self)

    def config_hash(self) -> str:
        return canon_hash(self.to_doc())

    def with_values(self, **kwargs) -> "SessionConfig":
        doc = self.to_doc()
        doc.update(kwargs)
        return from_doc(doc)


def _to_doc(obj: Any) -> Any:
    if is_dataclass(obj):
        return {f.name: _to_doc(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_to_doc(v) for v in obj]
    return obj


def _coerce(value: Any, f_type: str, path: str) -> Any:
    # Tuples come back from JSON as lists; normalize recursively.
    if isinstance(value, list):
        return tuple(_coerce(v, "", path) for v in value)
    return value


def _from_doc(cls, doc: dict, path: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"config section '{path or cls.__name__}' must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = set(doc) - set(known)
    if unknown:
        where = path or "config"
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")
    kwargs = {}
    for name, f in known.items():
        if name not in doc:
            continue
        value = doc[name]
        sub = f"{path}.{name}" if path else name
        if is_dataclass(f.type) or (isinstance(f.type, str) and f.type in _SECTIONS):
            section_cls = _SECTIONS[f.type] if isinstance(f.type, str) else f.type
            kwargs[name] = _from_doc(section_cls, value, sub)
        else:
            kwargs[name] = _coerce(value, "", sub)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config section '{path or 'root'}': {exc}") from exc


_SECTIONS = {
    "EavConfig": EavConfig, "MountConfig": MountConfig, "VacConfig": VacConfig,
    "DisturbanceConfig": DisturbanceConfig, "InitialConfig": InitialConfig,
    "StartFrameConfig": StartFrameConfig, "TerminationConfig": TerminationConfig,
    "RenderSettings": RenderSettings, "GatewayConfig": GatewayConfig,
}


def from_doc(doc: dict) -> SessionConfig:
    return _from_doc(SessionConfig, doc, "")


def load_config(path: str | Path) -> SessionConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {path}: {exc}") from exc
    return from_doc(doc)


def apply_overrides(config: SessionConfig, overrides: list[str]) -> SessionConfig:
    """Apply repeatable --set key=value pairs; dotted keys address sections."""
    doc = config.to_doc()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = doc
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(f"override references unknown config key: {key!r}")
            node = node[part]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ConfigError(f"override references unknown config key: {key!r}")
        node[parts[-1]] = value
    return from_doc(doc)
