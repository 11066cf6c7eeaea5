"""Line-based ``key = value`` parameter files.

Keys are exactly the :class:`~mutual_assist.model.SimParams` field names,
``#`` starts a comment, blank lines are ignored and unspecified keys keep
their defaults. Deadlines accept ``inf``.
"""

from __future__ import annotations

import math
from dataclasses import fields
from importlib import resources
from pathlib import Path

from .model import SimParams, ValidationError

_FIELDS = {f.name: f for f in fields(SimParams)}
_INT_FIELDS = {name for name, f in _FIELDS.items() if f.type == "int"}
_DEADLINES = {"deadline_alarm", "deadline_nonurgent"}


class ConfigError(ValidationError):
    """A parameter file that cannot be parsed."""


def default_config_path() -> Path:
    """The packaged calibrated configuration."""
    return Path(str(resources.files("mutual_assist") / "data" / "default.cfg"))


def _parse_value(key: str, text: str):
    if key in _INT_FIELDS:
        return int(text)
    if key in _DEADLINES:
        value = float(text)
        if value.is_integer():
            return int(value)
        return value
    return float(text)


def parse_config(text: str, source: str = "<string>") -> SimParams:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ConfigError([f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}"])
        if key not in _FIELDS:
            raise ConfigError([f"{source}:{lineno}: unknown key {key!r}"])
        if key in values:
            raise ConfigError([f"{source}:{lineno}: duplicate key {key!r}"])
        try:
            values[key] = _parse_value(key, value)
        except ValueError:
            raise ConfigError([f"{source}:{lineno}: bad value for {key}: {value!r}"]) from None
    return SimParams(**values).validate()


def load_config(path) -> SimParams:
    """Read and validate a parameter file. A missing file raises ``FileNotFoundError``."""
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), source=str(path))


def format_value(value) -> str:
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    return repr(value)


def dump_config(params: SimParams) -> str:
    return "".join(f"{name} = {format_value(getattr(params, name))}\n" for name in _FIELDS)


def write_config(params: SimParams, path) -> None:
    Path(path).write_text(dump_config(params), encoding="utf-8")
