"""Shared fixtures: seeded generators, the worked-example models and the shipped scenario files."""

from pathlib import Path

import numpy as np
import pytest

from config import SEED
from data import fixtures

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "data" / "scenarios"


@pytest.fixture
def gen():
    return np.random.default_rng(SEED)


@pytest.fixture
def dfs_model():
    return fixtures.dephasing_model(2, name="dephasing_dfs")


@pytest.fixture
def unequal_model():
    return fixtures.dephasing_model(
        2, fixtures.coherence(*fixtures.UNEQUAL_COHERENCE, hermitian=True), name="dephasing_unequal"
    )


@pytest.fixture
def controlled_model():
    return fixtures.dephasing_model(2, d_e=3, with_controls=True, name="dephasing_controls")


@pytest.fixture
def small_oscillator():
    return fixtures.oscillator_model(d=5, d_e=3)


@pytest.fixture
def scenario_dir():
    return SCENARIO_DIR
