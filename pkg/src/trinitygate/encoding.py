"""Canonical record encoding shared by every persisted and hashed artifact.

One encoding is used everywhere a record is hashed, framed, or stored: JSON
with keys sorted by code point, no insignificant whitespace, UTF-8 bytes.
The audit log, the memory store, scenario files, and the wire protocol all
emit exactly this form, so independently written encoders (the bundled
client re-verifies audit chains) can agree byte for byte.

Hashable material is restricted to strings, integers within the IEEE-754
exact range, booleans, null, arrays, and objects with string keys. Floats
are rejected outright: their text forms differ across languages.
"""

from __future__ import annotations

import json

# Largest integer every IEEE-754 double encoder prints exactly.
MAX_CANONICAL_INT = 2**53 - 1


class NotCanonical(ValueError):
    """Raised for values the canonical encoding refuses to represent."""


def _check(value: object, path: str) -> None:
    if value is None or isinstance(value, (str, bool)):
        return
    if isinstance(value, int):
        if abs(value) > MAX_CANONICAL_INT:
            raise NotCanonical(f"{path}: integer outside exact double range")
        return
    if isinstance(value, float):
        raise NotCanonical(f"{path}: floats are not canonical")
    if isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            _check(item, f"{path}[{i}]")
        return
    if isinstance(value, dict):
        for key, item in value.items():
            if not isinstance(key, str):
                raise NotCanonical(f"{path}: non-string key {key!r}")
            _check(item, f"{path}.{key}")
        return
    raise NotCanonical(f"{path}: unsupported type {type(value).__name__}")


def canonical_json(value: object) -> str:
    """Encode ``value`` in the canonical form; rejects non-canonical input."""
    _check(value, "$")
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_bytes(value: object) -> bytes:
    return canonical_json(value).encode("utf-8")
