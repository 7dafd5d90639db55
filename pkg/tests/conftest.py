import numpy as np
import pytest

from flockspec.torus import ScalarField, make_grid
from flockspec.verify import random_band_limited


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(12345))


@pytest.fixture
def random_field(rng):
    """Factory: random band-limited ScalarField on a fresh grid."""

    def make(dim=1, N=32, band=None, offset=0.0, scale=1.0):
        grid = make_grid(dim, N)
        band = N // 4 if band is None else band
        return ScalarField(grid, offset + scale * random_band_limited(grid, band, rng))

    return make


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
