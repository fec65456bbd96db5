import numpy as np
import pytest

from birdify import _accel


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    """Run a test once per kernel backend."""
    if request.param == "numba" and not _accel.HAVE_NUMBA:
        pytest.skip("numba not installed")
    prev = _accel.set_numba(request.param == "numba")
    yield request.param
    _accel.set_numba(prev)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
