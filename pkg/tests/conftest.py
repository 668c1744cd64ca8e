import numpy as np
import pytest

import drivepatch as dp
from drivepatch.oracle import HashEmbedder
from drivepatch.scenario import desk_variant


@pytest.fixture(scope="session")
def crosswalk():
    return dp.builtin_scenarios()[0]


@pytest.fixture(scope="session")
def highway():
    return dp.builtin_scenarios()[1]


@pytest.fixture(scope="session")
def desk_crosswalk(crosswalk):
    # Desk-scale rendering: quarter-resolution camera, coarse patch raster.
    return desk_variant(crosswalk, 480, 270, (32, 32))


@pytest.fixture(scope="session")
def embedder():
    return HashEmbedder(256)


@pytest.fixture()
def gray_patch():
    values = np.full((8, 8, 3), 128.0)
    return dp.Patch(values, 1.0, 1.0)
