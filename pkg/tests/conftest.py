"""Shared fixtures: one session seed, small reference grids."""

import numpy as np
import pytest

from nudgeflow.fields import TorusGrid

SEED = 20260815


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


@pytest.fixture
def grid8():
    return TorusGrid(2.0 * np.pi, 8)


@pytest.fixture
def grid16():
    return TorusGrid(2.0 * np.pi, 16)


@pytest.fixture
def grid32():
    return TorusGrid(2.0 * np.pi, 32)
