"""Canonical JSON with bit-faithful floats.

Session logs and wire headers must re-serialize to identical bytes after a
parse round trip, so floats are written with 17 significant digits (enough
to pin down any IEEE double) and always carry a decimal point or exponent
so they parse back as floats, never ints.
"""
from __future__ import annotations

import hashlib
import math
from typing import Any

__all__ = ["canon_dumps", "canon_hash", "format_float"]


def format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"non-finite float not serializable: {x!r}")
    s = format(x, ".17g")
    if "." not in s and "e" not in s and "E" not in s:
        s += ".0"
    return s


def _escape(s: str) -> str:
    out = ['"']
    for ch in s:
        if ch == '"':
            out.append('\\"')
        elif ch == "\\":
            out.append("\\\\")
        elif ord(ch) < 0x20:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def _write(obj: Any, parts: list[str], sort_keys: bool) -> None:
    if obj is None:
        parts.append("null")
    elif obj is True:
        parts.append("true")
    elif obj is False:
        parts.append("false")
    elif isinstance(obj, int):
        parts.append(str(obj))
    elif isinstance(obj, float):
        parts.append(format_float(obj))
    elif isinstance(obj, str):
        parts.append(_escape(obj))
    elif isinstance(obj, (list, tuple)):
        parts.append("[")
        for i, item in enumerate(obj):
            if i:
                parts.append(",")
            _write(item, parts, sort_keys)
        parts.append("]")
    elif isinstance(obj, dict):
        parts.append("{")
        keys = sorted(obj) if sort_keys else list(obj)
        for i, k in enumerate(keys):
            if i:
                parts.append(",")
            if not isinstance(k, str):
                raise TypeError(f"non-string key: {k!r}")
            parts.append(_escape(k))
            parts.append(":")
            _write(obj[k], parts, sort_keys)
        parts.append("}")
    else:
        raise TypeError(f"not JSON-serializable: {type(obj).__name__}")


def canon_dumps(obj: Any, sort_keys: bool = False) -> str:
    """Serialize to compact JSON with bit-faithful float formatting."""
    parts: list[str] = []
    _write(obj, parts, sort_keys)
    return "".join(parts)


def canon_hash(obj: Any) -> str:
    """SHA-256 hex digest of the sorted-key canonical form."""
    return hashlib.sha256(canon_dumps(obj, sort_keys=True).encode("utf-8")).hexdigest()
