"""Byte-stable JSON serialization and hashing.

Demo replay and the wire protocol both compare serialized state for exact
byte equality, so everything that ends up in a log line or on the socket
goes through this one serializer. Rules:

- object keys keep insertion order (callers declare field order),
- no whitespace,
- floats use the shortest decimal that round-trips to the same IEEE-754
  double; floats with an integral value drop the trailing ".0",
- negative zero serializes as "0",
- non-finite numbers are refused.

``json.dumps`` is close but not sufficient: it always renders 1.0 as
"1.0" and happily emits NaN/Infinity, so the number path is hand-rolled.
"""

from __future__ import annotations

import json
import math

__all__ = ["dumps", "format_number", "fnv1a64", "NonFiniteNumber"]


class NonFiniteNumber(ValueError):
    """A NaN or infinity reached the serializer."""


def format_number(value: int | float) -> str:
    if isinstance(value, bool):
        raise TypeError("bool is not a number here")
    if isinstance(value, int):
        return str(value)
    if not math.isfinite(value):
        raise NonFiniteNumber(f"cannot serialize {value!r}")
    if value == 0.0:
        return "0"
    # float() is identity for true floats and strips numpy scalar wrappers,
    # whose repr ("np.float64(...)") would otherwise leak into the bytes.
    text = repr(float(value))
    if text.endswith(".0"):
        text = text[:-2]
    return text


def _dump(obj, out: list[str]) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, (int, float)):
        out.append(format_number(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(",")
            _dump(item, out)
        out.append("]")
    elif isinstance(obj, dict):
        out.append("{")
        for i, (key, val) in enumerate(obj.items()):
            if i:
                out.append(",")
            if not isinstance(key, str):
                raise TypeError(f"object keys must be str, got {type(key).__name__}")
            out.append(json.dumps(key, ensure_ascii=False))
            out.append(":")
            _dump(val, out)
        out.append("}")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """Serialize to canonical JSON text."""
    out: list[str] = []
    _dump(obj, out)
    return "".join(out)


_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a over raw bytes."""
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h
