import numpy as np
import pytest

from levyheat import _dp


@pytest.fixture(scope="session", autouse=True)
def jit_warmup():
    """Compile the numba kernels once so timed tests measure algorithm cost only."""
    _dp.warmup()


@pytest.fixture()
def rng():
    return np.random.default_rng(20260810)
