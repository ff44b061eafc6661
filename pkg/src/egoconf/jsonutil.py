"""Canonical JSON serialization shared by archives, descriptors, and hashes."""

from __future__ import annotations

import json
from typing import Any

import numpy as np


def _plain(obj: Any) -> Any:
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def canonical_dumps(obj: Any) -> str:
    """Deterministic single-line JSON: sorted keys, minimal separators."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_plain)
