"""Pipeline configuration: dotted keys from TOML files, environment and flags."""

from __future__ import annotations

import dataclasses
import os
import sys
from dataclasses import dataclass, field
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .ebms import EbmsConfig
from .quant import FixedConfig
from .regionprop import RegionConfig
from .tracker import TrackerConfig

ENV_PREFIX = "ETRK_"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SensorConfig:
    width: int = 240
    height: int = 180


@dataclass(frozen=True)
class FrameConfig:
    period_us: int = 33_000
    min_count: int = 1


@dataclass(frozen=True)
class EvalConfig:
    interpolate: bool = False


@dataclass(frozen=True)
class ExportConfig:
    size: int = 42
    bits_per_spike: int = 24
    slots: int = 8


@dataclass(frozen=True)
class PipelineConfig:
    sensor: SensorConfig = field(default_factory=SensorConfig)
    frame: FrameConfig = field(default_factory=FrameConfig)
    rp: RegionConfig = field(default_factory=RegionConfig)
    trk: TrackerConfig = field(default_factory=TrackerConfig)
    fx: FixedConfig = field(default_factory=FixedConfig)
    ebms: EbmsConfig = field(default_factory=EbmsConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    export: ExportConfig = field(default_factory=ExportConfig)

    @property
    def tracker(self) -> TrackerConfig:
        """Tracker settings with the fixed-point block folded in."""
        return dataclasses.replace(self.trk, fx=self.fx)


# config key -> dataclass field, where they differ
_ALIASES = {("trk", "overlap_threshold"): "overlap_ratio_threshold"}


def _sections() -> dict[str, type]:
    return {f.name: f.type for f in dataclasses.fields(PipelineConfig)}


def _field_map(section: str) -> dict[str, dataclasses.Field]:
    cls = type(getattr(PipelineConfig(), section))
    out = {}
    for f in dataclasses.fields(cls):
        if section == "trk" and f.name == "fx":
            continue
        key = next((k for (s, k), v in _ALIASES.items() if s == section and v == f.name), f.name)
        out[key] = f
    return out


def valid_keys() -> list[str]:
    return [f"{s}.{k}" for s in _sections() for k in _field_map(s)]


def _coerce(key: str, f: dataclasses.Field, value: Any) -> Any:
    kind = type(f.default)
    if kind is bool:
        if isinstance(value, str):
            low = value.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ConfigError(f"{key}: expected a boolean, got {value!r}")
        return bool(value)
    try:
        if kind is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if kind is float:
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected {kind.__name__}, got {value!r}") from None
    return value


def flatten(data: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    out = {}
    for k, v in data.items():
        key = f"{prefix}{k}"
        if isinstance(v, Mapping):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def apply(cfg: PipelineConfig, overrides: Mapping[str, Any]) -> PipelineConfig:
    """Return ``cfg`` with dotted-key overrides applied; unknown keys are rejected."""
    changes: dict[str, dict[str, Any]] = {}
    for key, value in overrides.items():
        section, _, name = key.partition(".")
        if section not in _sections():
            raise ConfigError(f"unknown config key {key!r}")
        fields = _field_map(section)
        if name not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        f = fields[name]
        changes.setdefault(section, {})[f.name] = _coerce(key, f, value)
    try:
        return dataclasses.replace(
            cfg, **{s: dataclasses.replace(getattr(cfg, s), **kw) for s, kw in changes.items()}
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def env_overrides(environ: Mapping[str, str] | None = None) -> dict[str, str]:
    environ = os.environ if environ is None else environ
    out = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        section, _, rest = name[len(ENV_PREFIX):].lower().partition("_")
        if section in _sections() and rest:
            out[f"{section}.{rest}"] = value
    return out


def read_toml(path) -> dict[str, Any]:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load(path=None, overrides: Mapping[str, Any] | None = None, environ: Mapping[str, str] | None = None) -> PipelineConfig:
    """File, then ``ETRK_*`` environment, then explicit overrides (flags win)."""
    cfg = PipelineConfig()
    if path is not None:
        cfg = apply(cfg, flatten(read_toml(path)))
    cfg = apply(cfg, env_overrides(environ))
    if overrides:
        cfg = apply(cfg, overrides)
    return cfg
