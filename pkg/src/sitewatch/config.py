"""Engine configuration: a flat ``key = value`` file, environment, then flags."""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional

from .pipeline import DEFAULT_COALESCE_WINDOW, DEFAULT_QUEUE_CAPACITY
from .reasoning import DEFAULT_DECOMPOSITION_CAP

OUT_DIR_ENV = "ENGINE_OUT_DIR"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    rule_file: Path
    model_files: List[Path] = field(default_factory=list)
    profile_file: Optional[Path] = None
    registry_file: Optional[Path] = None
    queue_capacity: int = DEFAULT_QUEUE_CAPACITY
    coalesce_window_ticks: int = DEFAULT_COALESCE_WINDOW
    decomposition_cap: int = DEFAULT_DECOMPOSITION_CAP
    horizon_ticks: int = 10
    tick_seconds: int = 60
    epoch: str = "1970-01-01T00:00:00Z"
    listen_port: Optional[int] = None
    weather_port: Optional[int] = None
    http_port: Optional[int] = None
    batch_seconds: float = 1.0
    confidence_k: int = 1
    confidence_radius: float = 0.0
    confidence_window: int = 0
    out_dir: Path = Path("out")

    def validate(self) -> "EngineConfig":
        for name in ("queue_capacity", "coalesce_window_ticks", "decomposition_cap",
                     "horizon_ticks", "tick_seconds", "confidence_k"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.batch_seconds <= 0:
            raise ConfigError("batch_seconds must be > 0")
        required = [("rule_file", self.rule_file)] + [("model_files", p) for p in self.model_files]
        for name in ("profile_file", "registry_file"):
            if getattr(self, name) is not None:
                required.append((name, getattr(self, name)))
        for name, path in required:
            if not Path(path).is_file():
                raise ConfigError(f"{name}: file not found: {path}")
        return self


_PATHS = {"rule_file", "profile_file", "registry_file", "out_dir"}
_INTS = {"queue_capacity", "coalesce_window_ticks", "decomposition_cap", "horizon_ticks",
         "tick_seconds", "listen_port", "weather_port", "http_port", "confidence_k", "confidence_window"}
_FLOATS = {"batch_seconds", "confidence_radius"}
_KEYS = {f.name for f in fields(EngineConfig)}


def _coerce(key: str, value: str, base: Path):
    if key == "model_files":
        return [base / p.strip() for p in value.split(",") if p.strip()]
    if key in _PATHS:
        return base / value
    try:
        if key in _INTS:
            return int(value)
        if key in _FLOATS:
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: not a number: {value!r}") from None
    return value


def parse_config_text(text: str, base: Path = Path(".")) -> Dict[str, object]:
    values: Dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value")
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, value, base)
    return values


def load_config(
    path: Optional[Path] = None,
    overrides: Optional[Mapping[str, object]] = None,
    environ: Optional[Mapping[str, str]] = None,
    validate: bool = True,
) -> EngineConfig:
    """Relative paths in the file resolve against the file's directory."""
    environ = os.environ if environ is None else environ
    values: Dict[str, object] = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        values.update(parse_config_text(text, path.parent))
    if environ.get(OUT_DIR_ENV):
        values["out_dir"] = Path(environ[OUT_DIR_ENV])
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _KEYS:
            raise ConfigError(f"unknown setting {key!r}")
        values[key] = value
    if "rule_file" not in values:
        raise ConfigError("rule_file is required")
    cfg = EngineConfig(**values)
    return cfg.validate() if validate else cfg


def with_overrides(cfg: EngineConfig, **changes) -> EngineConfig:
    return replace(cfg, **{k: v for k, v in changes.items() if v is not None})
