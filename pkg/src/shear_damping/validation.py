from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from jsonschema import ValidationError, validate

SCHEMA_DIR = Path(__file__).resolve().parents[2] / "schemas"
RUN_CONFIG_SCHEMA = SCHEMA_DIR / "run_config.json"
RESULT_SCHEMA = SCHEMA_DIR / "result.json"


class SchemaValidationError(RuntimeError):
    pass


def load_schema(path: Path) -> dict[str, Any]:
    return json.loads(path.read_text(encoding="utf-8"))


def validate_json(data: Any, schema: dict[str, Any]) -> None:
    try:
        validate(data, schema)
    except ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaValidationError(f"{where}: {exc.message}") from exc
