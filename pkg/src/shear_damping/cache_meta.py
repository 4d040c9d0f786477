from __future__ import annotations

import hashlib
import json
from typing import Any

import numpy as np

SLICE_LOGIC_VERSION = "20261018-1"


def _hash_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _hash_json(payload: Any) -> str:
    return _hash_text(json.dumps(payload, ensure_ascii=False, sort_keys=True, separators=(",", ":")))


def hash_array(values: np.ndarray) -> str:
    data = np.ascontiguousarray(np.asarray(values, dtype=np.complex128))
    digest = hashlib.sha256()
    digest.update(str(data.shape).encode("utf-8"))
    digest.update(data.tobytes())
    return digest.hexdigest()


def build_slice_descriptor(
    *,
    profile: dict[str, Any],
    omega0: np.ndarray,
    n: int,
    logic_version: str = SLICE_LOGIC_VERSION,
) -> dict[str, Any]:
    """Everything an eigenfunction slice depends on apart from ``(k, y0, eps, iota)``."""
    profile_hash = _hash_json(profile)
    data_hash = hash_array(omega0)
    cache_version = _hash_json(
        {
            "profile_hash": profile_hash,
            "data_hash": data_hash,
            "n": int(n),
            "logic_version": logic_version,
        }
    )
    return {
        "cache_version": cache_version,
        "data_hash": data_hash,
        "logic_version": logic_version,
        "n": int(n),
        "profile_hash": profile_hash,
    }


def is_cache_current(metadata: dict[str, Any] | None, cache_version: str) -> bool:
    if not isinstance(metadata, dict):
        return False
    return str(metadata.get("cache_version", "")).strip() == cache_version


def hash_config(payload: dict[str, Any]) -> str:
    return _hash_json(payload)
