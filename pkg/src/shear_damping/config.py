from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from dotenv import load_dotenv

DEFAULT_ENV_PATH = ".env"


@dataclass(frozen=True)
class Config:
    output_dir: Path = Path("out")
    jobs: int = 1
    cache_path: Path | None = None
    seed: int = 0


def load_config(env_path: str | None = None) -> Config:
    load_dotenv(Path(env_path or os.environ.get("SHEAR_DAMPING_ENV", DEFAULT_ENV_PATH)).expanduser())
    cache = os.environ.get("SHEAR_DAMPING_CACHE", "").strip()
    return Config(
        output_dir=Path(os.environ.get("SHEAR_DAMPING_OUTPUT_DIR", "out")),
        jobs=max(1, int(os.environ.get("SHEAR_DAMPING_JOBS", "1"))),
        cache_path=Path(cache).expanduser() if cache else None,
        seed=int(os.environ.get("SHEAR_DAMPING_SEED", "0")),
    )
