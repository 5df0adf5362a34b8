import numpy as np
import pytest

from latticescope.grid import Grid2D


@pytest.fixture
def image_grid():
    return Grid2D.centered(25e-9, 256)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
