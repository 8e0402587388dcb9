"""Canonical JSON helpers shared by the wire protocol, digests, and reports."""

from __future__ import annotations

import hashlib
import json
import math
from typing import Any


def normalize(value: Any) -> Any:
    """Return a JSON tree with integral floats collapsed to ints.

    The wire contract serializes numbers as IEEE-754 doubles with integral
    values written without a fraction part, so 75.0 and 75 must compare,
    hash, and serialize identically. Non-finite numbers are rejected.
    """
    if isinstance(value, bool):
        return value
    if isinstance(value, float):
        if math.isnan(value) or math.isinf(value):
            raise ValueError(f"non-finite number not representable: {value!r}")
        return int(value) if value.is_integer() else value
    if isinstance(value, dict):
        return {str(k): normalize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [normalize(v) for v in value]
    return value


def canonical_dumps(value: Any) -> str:
    """Key-sorted, whitespace-free JSON; the byte form used for digests."""
    return json.dumps(normalize(value), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def blake64(payload: str | bytes) -> str:
    """Stable 64-bit hex digest (16 hex chars)."""
    if isinstance(payload, str):
        payload = payload.encode("utf-8")
    return hashlib.blake2b(payload, digest_size=8).hexdigest()


def digest_value(value: Any) -> str:
    return blake64(canonical_dumps(value))
