"""Shared fixtures: small grids, seeded generators and tiny field series."""

import json
from pathlib import Path

import numpy as np
import pytest

from helper.field_core import regular_grid
from models.field import FieldSeries

GOLDEN_DIR = Path(__file__).parent / "golden"


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run desk-scale acceptance tests")
    parser.addoption("--update-golden", action="store_true", default=False, help="rewrite recorded golden files")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid_2x2():
    return regular_grid(2, 2)


@pytest.fixture
def grid_3x3():
    return regular_grid(3, 3)


@pytest.fixture
def frechet_series(rng, grid_3x3):
    """Temporally independent unit Frechet fields, 3x3 sites x 4000 times."""
    values = 1.0 / rng.exponential(size=(4000, grid_3x3.site_count))
    return FieldSeries(grid=grid_3x3, values=values)


@pytest.fixture
def tmp_output(tmp_path, monkeypatch):
    """Redirect the settings output directory into a temporary folder."""
    from config import settings

    monkeypatch.setattr(settings, "output_dir", tmp_path / "output")
    return tmp_path


@pytest.fixture
def golden(request):
    """
    Recorded reference values under tests/golden/.

    ``golden(name, payload)`` returns the recorded payload. A missing file (or
    ``--update-golden``) records ``payload`` and skips the comparison.
    """

    def load(name: str, payload):
        path = GOLDEN_DIR / f"{name}.json"
        if request.config.getoption("--update-golden") or not path.exists():
            GOLDEN_DIR.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
            pytest.skip(f"recorded golden file {path.name}")
        return json.loads(path.read_text())

    return load
