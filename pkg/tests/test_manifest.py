import json
from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest

from shear_damping.manifest import (
    CURRENT_VERSION,
    ManifestError,
    RunManifest,
    append_ledger,
    format_utc,
    hash_file,
    load_manifest,
    read_ledger,
    save_manifest,
)


def _manifest(**overrides) -> RunManifest:
    fields = {
        "run_id": "2026-10-18T09:00:00Z-abcdef123456",
        "config_hash": "abcdef1234567890",
        "config": {"seed": 3},
        "seed": 3,
        "started_utc": "2026-10-18T09:00:00Z",
        "finished_utc": "2026-10-18T09:05:00Z",
        "experiments": ("orr-couette", "kernel-decay"),
        "timings": {"orr-couette": 12.5},
        "fitted": {"orr-couette:k1:psi": -1.97},
        "outputs": {"summary.csv": "00ff"},
        "versions": {"numpy": "2.1.0"},
    }
    fields.update(overrides)
    return RunManifest(**fields)


def test_format_utc_drops_microseconds_and_converts_offsets():
    dt = datetime(2026, 10, 18, 11, 0, 0, 250_000, tzinfo=timezone(timedelta(hours=2)))
    assert format_utc(dt) == "2026-10-18T09:00:00Z"


def test_load_missing_returns_none(tmp_path: Path):
    assert load_manifest(tmp_path / "nope.json") is None


def test_save_then_load_roundtrip(tmp_path: Path):
    path = tmp_path / "manifest.json"
    manifest = _manifest()
    save_manifest(path, manifest)
    assert load_manifest(path) == manifest
    assert not (tmp_path / "manifest.json.tmp").exists()


def test_save_creates_parent_dirs(tmp_path: Path):
    path = tmp_path / "nested" / "run" / "manifest.json"
    save_manifest(path, _manifest())
    assert path.exists()


def test_saved_manifest_is_sorted_json(tmp_path: Path):
    path = tmp_path / "manifest.json"
    save_manifest(path, _manifest())
    payload = json.loads(path.read_text(encoding="utf-8"))
    assert payload["version"] == CURRENT_VERSION
    assert list(payload) == sorted(payload)


def test_load_rejects_invalid_json(tmp_path: Path):
    path = tmp_path / "manifest.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ManifestError, match="invalid JSON"):
        load_manifest(path)


def test_load_rejects_non_object(tmp_path: Path):
    path = tmp_path / "manifest.json"
    path.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ManifestError, match="not a JSON object"):
        load_manifest(path)


def test_load_rejects_other_version(tmp_path: Path):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"version": 99, "run_id": "x", "config_hash": "y"}), encoding="utf-8")
    with pytest.raises(ManifestError, match="unsupported manifest version"):
        load_manifest(path)


def test_load_rejects_missing_run_id(tmp_path: Path):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"version": CURRENT_VERSION, "config_hash": "y"}), encoding="utf-8")
    with pytest.raises(ManifestError, match="invalid manifest"):
        load_manifest(path)


def test_ledger_appends_one_line_per_row(tmp_path: Path):
    path = tmp_path / "ledger.jsonl"
    assert read_ledger(path) == []
    append_ledger(path, {"id": "a", "status": "pass"})
    append_ledger(path, {"id": "b", "status": "fail"})
    assert [row["id"] for row in read_ledger(path)] == ["a", "b"]
    assert len(path.read_text(encoding="utf-8").splitlines()) == 2


def test_ledger_rejects_bad_line(tmp_path: Path):
    path = tmp_path / "ledger.jsonl"
    path.write_text('{"id": "a"}\nnot json\n', encoding="utf-8")
    with pytest.raises(ManifestError, match="line 2"):
        read_ledger(path)


def test_hash_file_is_content_hash(tmp_path: Path):
    first = tmp_path / "a.csv"
    second = tmp_path / "b.csv"
    first.write_text("t,psi\n", encoding="utf-8")
    second.write_text("t,psi\n", encoding="utf-8")
    assert hash_file(first) == hash_file(second)
    second.write_text("t,ux\n", encoding="utf-8")
    assert hash_file(first) != hash_file(second)
