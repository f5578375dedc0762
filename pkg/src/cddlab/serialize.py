"""Canonical flat-text serialization and digests for config objects.

Configs flatten to dotted key=value lines; the digest hashes the sorted
lines, so it is stable under field reordering and whitespace choices.
"""
from __future__ import annotations

import dataclasses
import hashlib


def _value_str(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ",".join(_value_str(x) for x in v)
    if v is None:
        return ""
    return str(v)


def flatten(obj, prefix: str = "") -> dict:
    """Flatten a dataclass (possibly nested) into dotted string keys."""
    out = {}
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        for f in dataclasses.fields(obj):
            key = f"{prefix}{f.name}"
            val = getattr(obj, f.name)
            if dataclasses.is_dataclass(val) and not isinstance(val, type):
                out.update(flatten(val, prefix=f"{key}."))
            else:
                out[key] = _value_str(val)
    else:
        out[prefix.rstrip(".")] = _value_str(obj)
    return out


def canonical_text(flat: dict) -> str:
    return "\n".join(f"{k}={flat[k]}" for k in sorted(flat)) + "\n"


def digest_of(obj) -> str:
    """16-hex-char digest of a dataclass or flat dict."""
    flat = obj if isinstance(obj, dict) else flatten(obj)
    return hashlib.sha256(canonical_text(flat).encode("utf-8")).hexdigest()[:16]
