"""Flat key-value config files: `key = value` lines, `#` comments."""

from __future__ import annotations

from pathlib import Path


class ConfigError(ValueError):
    pass


def load_kv(path: Path | str) -> dict[str, str]:
    """Parse a key-value file. Later duplicate keys win."""
    values: dict[str, str] = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        values[key] = value.strip()
    return values


def dump_kv(values: dict[str, str], path: Path | str) -> None:
    lines = [f"{key} = {value}" for key, value in values.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def get_float_list(values: dict[str, str], key: str, n: int, default: float = 0.0) -> list[float]:
    """Comma-separated float vector of exactly n entries; missing key means all-default."""
    raw = values.get(key)
    if raw is None or not raw.strip():
        return [default] * n
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != n:
        raise ConfigError(f"{key}: expected {n} comma-separated values, got {len(parts)}")
    return [float(p) for p in parts]


def get_bool(values: dict[str, str], key: str, default: bool) -> bool:
    raw = values.get(key)
    if raw is None:
        return default
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
