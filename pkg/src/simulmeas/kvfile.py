"""Plain-text ``key=value`` files used for manifests, plan descriptors, and configs."""

from __future__ import annotations

import os
from collections.abc import Mapping


def format_kv(items: Mapping[str, object]) -> str:
    lines = []
    for key, value in items.items():
        if "=" in key or "\n" in key:
            raise ValueError(f"invalid key {key!r}")
        text = _format_value(value)
        if "\n" in text:
            raise ValueError(f"value for {key!r} spans lines")
        lines.append(f"{key}={text}")
    return "\n".join(lines) + "\n"


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(float(value))
    if isinstance(value, (list, tuple)):
        return ",".join(_format_value(v) for v in value)
    return str(value)


def parse_kv(text: str) -> dict[str, str]:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        out[key.strip()] = value.strip()
    return out


def read_kv(path: str | os.PathLike) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        return parse_kv(fh.read())


def write_kv(path: str | os.PathLike, items: Mapping[str, object]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_kv(items))


def parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")
