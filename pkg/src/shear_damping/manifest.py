"""Run manifest and experiment ledger.

The manifest (``manifest.json``) echoes the config, records library
versions, timings and fitted constants, and carries hashes of every output
file. It is written atomically once the run finishes. The ledger
(``ledger.jsonl``) gets one line per experiment as soon as it completes and
is never rewritten.
"""
from __future__ import annotations

import hashlib
import json
import os
import platform
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np
import scipy

CURRENT_VERSION = 1


class ManifestError(Exception):
    """Raised when a manifest or ledger file is malformed or unreadable."""


def format_utc(dt: datetime) -> str:
    dt = dt.astimezone(timezone.utc).replace(microsecond=0)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def library_versions() -> dict[str, str]:
    return {
        "numpy": np.__version__,
        "python": platform.python_version(),
        "scipy": scipy.__version__,
    }


def hash_file(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass(frozen=True)
class RunManifest:
    run_id: str
    config_hash: str
    config: dict[str, Any]
    seed: int
    started_utc: str
    finished_utc: str = ""
    experiments: tuple[str, ...] = ()
    timings: dict[str, float] = field(default_factory=dict)
    fitted: dict[str, Any] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    versions: dict[str, str] = field(default_factory=library_versions)
    exit_code: int = 0
    version: int = CURRENT_VERSION

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": self.config,
            "config_hash": self.config_hash,
            "exit_code": self.exit_code,
            "experiments": list(self.experiments),
            "finished_utc": self.finished_utc,
            "fitted": self.fitted,
            "outputs": self.outputs,
            "run_id": self.run_id,
            "seed": self.seed,
            "started_utc": self.started_utc,
            "timings": self.timings,
            "version": self.version,
            "versions": self.versions,
        }


def load_manifest(path: Path) -> RunManifest | None:
    """Return the stored manifest, or ``None`` if the file does not exist."""
    if not path.exists():
        return None
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ManifestError(f"manifest at {path} is not a JSON object")

    version = int(data.get("version", 1))
    if version != CURRENT_VERSION:
        raise ManifestError(f"unsupported manifest version {version} (expected {CURRENT_VERSION})")

    try:
        return RunManifest(
            run_id=str(data["run_id"]),
            config_hash=str(data["config_hash"]),
            config=dict(data.get("config") or {}),
            seed=int(data.get("seed", 0)),
            started_utc=str(data.get("started_utc", "")),
            finished_utc=str(data.get("finished_utc", "")),
            experiments=tuple(str(e) for e in data.get("experiments") or []),
            timings={str(k): float(v) for k, v in (data.get("timings") or {}).items()},
            fitted=dict(data.get("fitted") or {}),
            outputs={str(k): str(v) for k, v in (data.get("outputs") or {}).items()},
            versions={str(k): str(v) for k, v in (data.get("versions") or {}).items()},
            exit_code=int(data.get("exit_code", 0)),
            version=version,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"invalid manifest at {path}: {exc}") from exc


def save_manifest(path: Path, manifest: RunManifest) -> None:
    """Write through a sibling ``<name>.tmp`` and ``os.replace`` it into place."""
    path.parent.mkdir(parents=True, exist_ok=True)
    serialized = json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n"
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(serialized, encoding="utf-8")
    os.replace(tmp, path)


def append_ledger(path: Path, row: dict[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as handle:
        handle.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def read_ledger(path: Path) -> list[dict[str, Any]]:
    if not path.exists():
        return []
    rows = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"invalid ledger line {lineno} in {path}: {exc}") from exc
        if not isinstance(row, dict):
            raise ManifestError(f"ledger line {lineno} in {path} is not a JSON object")
        rows.append(row)
    return rows
