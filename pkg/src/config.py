"""Run configuration: defaults < --config JSON < RR_* environment < command-line flags."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

from src.errors import ConfigError

logger = logging.getLogger(__name__)

ENV_PREFIX = "RR_"


def str_to_bool(value: str) -> bool:
    """Convert environment variable string to boolean."""
    return value.lower() in ("true", "1", "yes", "on")


def env_flag(name: str, default: bool) -> bool:
    return str_to_bool(os.getenv(name, "true" if default else "false"))


def _parse_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).lower()
    if text in ("true", "1", "yes", "on"):
        return True
    if text in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _parse_as(default: Any) -> Callable[[Any], Any]:
    """Parser for env strings, chosen from the type of the built-in default."""
    if isinstance(default, bool):
        return _parse_bool
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    if isinstance(default, (list, tuple, dict)):
        return lambda v: json.loads(v) if isinstance(v, str) else v
    return lambda v: v


@dataclass
class RunConfig:
    """Fully resolved settings of one command, plus where each value came from."""
    command: str
    values: dict[str, Any]
    sources: dict[str, str] = field(default_factory=dict)

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def get(self, key: str, default: Any = None) -> Any:
        return self.values.get(key, default)

    def overrides(self) -> dict[str, str]:
        """Keys not left at their built-in default, mapped to the layer that set them."""
        return {k: source for k, source in self.sources.items() if source != "default"}


def load_config_file(path: str | Path | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e})") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data


def resolve(
    command: str,
    defaults: Mapping[str, Any],
    config_path: str | Path | None = None,
    flags: Mapping[str, Any] | None = None,
    environ: Mapping[str, str] | None = None,
) -> RunConfig:
    """Merge the configuration layers for `command`; unknown keys are rejected.

    A config file may hold the keys directly or group them under the command name.
    Flags whose value is None were not given on the command line.
    """
    environ = os.environ if environ is None else environ
    values = dict(defaults)
    sources = {k: "default" for k in defaults}

    file_values = load_config_file(config_path)
    if command in file_values and isinstance(file_values[command], dict):
        file_values = file_values[command]
    unknown = set(file_values) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown {command} config keys: {sorted(unknown)}")
    values.update(file_values)
    sources.update({k: "file" for k in file_values})

    for key, default in defaults.items():
        env_name = f"{ENV_PREFIX}{key.upper()}"
        if env_name not in environ:
            continue
        try:
            values[key] = _parse_as(default)(environ[env_name])
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{env_name}={environ[env_name]!r} is not valid: {e}") from e
        sources[key] = "env"

    for key, value in (flags or {}).items():
        if value is None:
            continue
        if key not in defaults:
            raise ConfigError(f"unknown {command} option: {key}")
        values[key] = value
        sources[key] = "flag"

    logger.debug(f"Resolved {command} config: {values}")
    return RunConfig(command=command, values=values, sources=sources)
