import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from shear_damping.profiles import make_bump_profile, make_couette  # noqa: E402


@pytest.fixture
def couette():
    return make_couette()


@pytest.fixture
def small_bump():
    return make_bump_profile(0.05)
