from __future__ import annotations

import json
import sqlite3
from pathlib import Path
from typing import Any

import numpy as np


def _slice_key(k: int, y0: float, eps: float, iota: int) -> tuple[int, str, str, int]:
    # repr keeps every bit of the float so keys never collide after rounding
    return int(k), repr(float(y0)), repr(float(eps)), int(iota)


class SliceCache:
    """Eigenfunction slices stored as complex128 blobs, one row per ``(k, y0, eps, iota)``."""

    def __init__(self, db_path: Path):
        self.db_path = db_path
        self.db_path.parent.mkdir(parents=True, exist_ok=True)
        self.conn = sqlite3.connect(self.db_path)
        self.conn.row_factory = sqlite3.Row
        self._init_schema()
        self.hits = 0
        self.misses = 0

    def _init_schema(self) -> None:
        self.conn.executescript(
            """
            CREATE TABLE IF NOT EXISTS slices (
              cache_version TEXT NOT NULL,
              k INTEGER NOT NULL,
              y0 TEXT NOT NULL,
              eps TEXT NOT NULL,
              iota INTEGER NOT NULL,
              size INTEGER NOT NULL,
              residual REAL NOT NULL,
              values_blob BLOB NOT NULL,
              updated_at TEXT DEFAULT CURRENT_TIMESTAMP,
              PRIMARY KEY (cache_version, k, y0, eps, iota)
            );
            CREATE TABLE IF NOT EXISTS descriptors (
              cache_version TEXT PRIMARY KEY,
              descriptor_json TEXT NOT NULL,
              updated_at TEXT DEFAULT CURRENT_TIMESTAMP
            );
            """
        )
        self.conn.commit()

    def register(self, descriptor: dict[str, Any]) -> None:
        self.conn.execute(
            """
            INSERT INTO descriptors(cache_version, descriptor_json)
            VALUES (?, ?)
            ON CONFLICT(cache_version) DO UPDATE SET
              descriptor_json=excluded.descriptor_json,
              updated_at=CURRENT_TIMESTAMP
            """,
            (descriptor["cache_version"], json.dumps(descriptor, ensure_ascii=False, sort_keys=True)),
        )
        self.conn.commit()

    def get_descriptor(self, cache_version: str) -> dict[str, Any] | None:
        row = self.conn.execute(
            "SELECT descriptor_json FROM descriptors WHERE cache_version=?", (cache_version,)
        ).fetchone()
        return json.loads(row["descriptor_json"]) if row else None

    def get_slice(self, cache_version: str, k: int, y0: float, eps: float, iota: int) -> np.ndarray | None:
        row = self.conn.execute(
            """
            SELECT size, values_blob FROM slices
            WHERE cache_version=? AND k=? AND y0=? AND eps=? AND iota=?
            """,
            (cache_version, *_slice_key(k, y0, eps, iota)),
        ).fetchone()
        if not row:
            self.misses += 1
            return None
        self.hits += 1
        values = np.frombuffer(row["values_blob"], dtype="<c16")
        if values.size != int(row["size"]):
            return None
        return values.astype(np.complex128)

    def put_slices(
        self,
        cache_version: str,
        rows: list[tuple[int, float, float, int, np.ndarray, float]],
    ) -> None:
        """Upsert ``(k, y0, eps, iota, values, residual)`` rows in one transaction."""
        self.conn.executemany(
            """
            INSERT INTO slices(cache_version, k, y0, eps, iota, size, residual, values_blob)
            VALUES (?, ?, ?, ?, ?, ?, ?, ?)
            ON CONFLICT(cache_version, k, y0, eps, iota) DO UPDATE SET
              size=excluded.size,
              residual=excluded.residual,
              values_blob=excluded.values_blob,
              updated_at=CURRENT_TIMESTAMP
            """,
            [
                (
                    cache_version,
                    *_slice_key(k, y0, eps, iota),
                    int(values.size),
                    float(residual),
                    np.ascontiguousarray(values, dtype="<c16").tobytes(),
                )
                for k, y0, eps, iota, values, residual in rows
            ],
        )
        self.conn.commit()

    def count(self, cache_version: str | None = None) -> int:
        if cache_version is None:
            row = self.conn.execute("SELECT COUNT(*) AS n FROM slices").fetchone()
        else:
            row = self.conn.execute(
                "SELECT COUNT(*) AS n FROM slices WHERE cache_version=?", (cache_version,)
            ).fetchone()
        return int(row["n"])

    def close(self) -> None:
        self.conn.close()
