"""Flat key-value configuration with CLI-flag override.

One declarative file, `key = value` per line, `#` comments. Dotted keys
namespace related settings (`clusters.k`, `vlm.endpoint`, `paths.*`).
Values parse as int, float, bool, or string. Every CLI flag mirrors a
config key and wins when given.
"""

from __future__ import annotations


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "seed": 0,
    "workers": 4,
    "clusters.k": 20,
    "erosion.levels": 4,
    "erosion.element": "square3",
    "curation.min_side": 1024,
    "curation.max_side": 1536,
    "splits.train": 0.8,
    "splits.validation": 0.1,
    "splits.test": 0.1,
    "backend.kind": "builtin",
    "vlm.model": "judge",
    "vlm.max_attempts": 3,
    "study.expiry_minutes": 30,
}


def _parse_value(raw: str):
    raw = raw.strip()
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "'\"":
        return raw[1:-1]
    return raw


def load_config(path) -> dict:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            if not key:
                raise ConfigError(f"{path}:{lineno}: empty key")
            values[key] = _parse_value(raw)
    return values


class Config:
    """Defaults < config file < explicit flags."""

    def __init__(self, file_values: dict | None = None, flag_values: dict | None = None):
        self._values = dict(DEFAULTS)
        self._values.update(file_values or {})
        for key, value in (flag_values or {}).items():
            if value is not None:
                self._values[key] = value

    @classmethod
    def load(cls, path=None, flags: dict | None = None) -> "Config":
        file_values = load_config(path) if path else {}
        return cls(file_values, flags)

    def get(self, key: str, default=None):
        return self._values.get(key, default)

    def require(self, key: str):
        if key not in self._values or self._values[key] is None:
            raise ConfigError(f"missing required config key {key!r}")
        return self._values[key]

    def __contains__(self, key: str) -> bool:
        return key in self._values

    def as_dict(self) -> dict:
        return dict(self._values)

    @property
    def seed(self) -> int:
        return int(self._values["seed"])

    def split_ratios(self) -> tuple[float, float, float]:
        return (float(self._values["splits.train"]),
                float(self._values["splits.validation"]),
                float(self._values["splits.test"]))
