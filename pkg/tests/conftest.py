import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from wicknls.spectral import build_lattice

settings.register_profile("wicknls", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("wicknls")


def random_coeffs(lattice, rng, n=None, scale=1.0):
    shape = (lattice.n_modes,) if n is None else (n, lattice.n_modes)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=[(1, 4), (1, 16), (2, 1), (2, 4), (2, 8)], ids=lambda p: f"d{p[0]}n{p[1]}")
def lattice(request):
    return build_lattice(*request.param)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[key])
