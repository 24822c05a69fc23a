"""Canonical JSON writing and parsing helpers.

All structured outputs go through :func:`dumps_canonical` so that repeated
runs produce byte-identical files: dict insertion order is preserved,
floats are rendered with 17 significant digits (lossless for float64), and
non-finite floats are rejected as internal invariant violations.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import InternalError, ParseError

__all__ = ["format_float", "dumps_canonical", "dump_canonical", "load_json"]


def format_float(value: float) -> str:
    """Render a float with 17 significant digits; round-trips exactly."""
    if not (value == value) or value in (float("inf"), float("-inf")):
        raise InternalError(f"non-finite float in output: {value!r}")
    text = format(value, ".17g")
    if "." not in text and "e" not in text and "E" not in text:
        text += ".0"
    return text


def _encode(obj, parts: list[str]) -> None:
    if obj is None:
        parts.append("null")
    elif obj is True:
        parts.append("true")
    elif obj is False:
        parts.append("false")
    elif isinstance(obj, str):
        parts.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, int):
        parts.append(str(obj))
    elif isinstance(obj, float):
        parts.append(format_float(obj))
    elif isinstance(obj, dict):
        parts.append("{")
        for idx, (key, value) in enumerate(obj.items()):
            if not isinstance(key, str):
                raise InternalError(f"non-string JSON key: {key!r}")
            if idx:
                parts.append(",")
            parts.append(json.dumps(key, ensure_ascii=False))
            parts.append(":")
            _encode(value, parts)
        parts.append("}")
    elif isinstance(obj, (list, tuple)):
        parts.append("[")
        for idx, value in enumerate(obj):
            if idx:
                parts.append(",")
            _encode(value, parts)
        parts.append("]")
    else:
        raise InternalError(f"unserializable value of type {type(obj).__name__}")


def dumps_canonical(obj) -> str:
    parts: list[str] = []
    _encode(obj, parts)
    parts.append("\n")
    return "".join(parts)


def dump_canonical(obj, path: str | Path) -> None:
    Path(path).write_text(dumps_canonical(obj), encoding="utf-8")


def load_json(path: str | Path):
    """Parse a JSON file, mapping failures to ParseError with location info."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
