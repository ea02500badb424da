import numpy as np
import pytest

from subsea_capacity.capacity import LinkSpec
from subsea_capacity.config import default_edf_table
from subsea_capacity.edf import EdfSpec, load_edf_table
from subsea_capacity.gn import FiberSpec, build_tensor

ER_RADIUS = 1.38e-6
ER_DENSITY = 5.51e24
LIFETIME = 10e-3
PUMP_ALPHA = 0.96  # 1/m at 980 nm


def make_edf(length=7.0):
    wl, a, g = load_edf_table(default_edf_table())
    return EdfSpec(wl, a, g, ER_RADIUS, ER_DENSITY, LIFETIME, 980e-9, PUMP_ALPHA, 0.0, length)


@pytest.fixture(scope="session")
def edf():
    return make_edf()


@pytest.fixture(scope="session")
def fiber():
    return FiberSpec()


@pytest.fixture(scope="session")
def small_link(fiber, edf):
    """Ten channels from 1540 nm on the full 287-span route."""
    return LinkSpec(fiber, edf, n_channels=10, first_wavelength=1540e-9)


@pytest.fixture(scope="session")
def small_tensor(small_link):
    lk = small_link
    return build_tensor(lk.fiber, lk.delta_f, lk.n_channels, lk.spans)


@pytest.fixture(scope="session")
def full_link(fiber, edf):
    return LinkSpec(fiber, edf)


@pytest.fixture(scope="session")
def cache_dir():
    from pathlib import Path

    d = Path(__file__).resolve().parents[1] / ".cache"
    d.mkdir(exist_ok=True)
    return d


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
