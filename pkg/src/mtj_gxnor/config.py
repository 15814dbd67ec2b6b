"""JSON config files with unit-suffixed keys.

Every physical field name carries its unit (``t_up_ns``, ``r_on_ohm``); the
suffix table below converts to SI base units on load and back on save, so a
recorded config re-loads to exactly the same internal values.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import ConfigError

UNIT_SCALE = {
    "_nm": 1e-9,
    "_ns": 1e-9,
    "_ps": 1e-12,
    "_mw": 1e-3,
    "_uw": 1e-6,
    "_ua": 1e-6,
    "_ohm": 1.0,
    "_k": 1.0,
    "_v": 1.0,
    "_t": 1.0,
    "_w": 1.0,
    "_a_per_m": 1.0,
    "_rad": 1.0,
    "_rad_per_s_t": 1.0,
    "_gsps": 1e9,
}


def read_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path=path) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, path=path, line=exc.lineno) from exc
    if not isinstance(data, dict):
        raise ConfigError("top level must be an object", path=path, line=1)
    return data


def line_of(path, key: str):
    """Best-effort line number of ``"key"`` in a JSON file (for error messages)."""
    try:
        for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if f'"{key}"' in line:
                return i
    except OSError:
        pass
    return None


def unit_of(key: str):
    # longest suffix first so "_rad_per_s_t" beats "_t"
    for suffix in sorted(UNIT_SCALE, key=len, reverse=True):
        if key.endswith(suffix):
            return suffix, UNIT_SCALE[suffix]
    return "", 1.0


def to_si(key: str, value) -> float:
    return float(value) * unit_of(key)[1]


def from_si(key: str, value: float) -> float:
    return float(value) / unit_of(key)[1]


def check_keys(data: dict, allowed, path=None, where: str = ""):
    for key in data:
        if key not in allowed:
            raise ConfigError(f"unknown field{where}", path=path, line=line_of(path, key)
                              if path else None, field=key)


def number(data: dict, key: str, default, path=None):
    if key not in data:
        return default
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("expected a number", path=path,
                          line=line_of(path, key) if path else None, field=key)
    return value


def dump_json(obj, path=None) -> str:
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
