from __future__ import annotations

from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURE_CSV = REPO_ROOT / "fixtures" / "july2016.csv"


@pytest.fixture(scope="session")
def fixture_csv() -> Path:
    assert FIXTURE_CSV.is_file(), f"missing fixture {FIXTURE_CSV}"
    return FIXTURE_CSV


@pytest.fixture(scope="session")
def fixture_scenario(fixture_csv):
    from iotnode.gateway import load_scenario

    return load_scenario(fixture_csv)
