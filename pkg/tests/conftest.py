import numpy as np
import pytest

from blochlab import hill
from blochlab import plane_wave as pw
from blochlab import potential as pot


@pytest.fixture(scope="session")
def mathieu1():
    return pot.mathieu(1.0)


@pytest.fixture(scope="session")
def basis8():
    return pw.PlaneWaveBasis.create(1, 8)


@pytest.fixture(scope="session")
def mathieu_bands():
    """Hill band intervals of q = 2cos(2 pi x) up to 60 (independent oracle)."""
    return hill.bands_1d(pot.mathieu(1.0), 60.0)


@pytest.fixture
def random_potential():
    """Factory for random real trigonometric polynomials."""

    def make(rng, dim=1, support=2, amp=1.0):
        coeffs = {(0,) * dim: rng.normal() * 0.3 * amp}
        for _ in range(2 * support):
            m = tuple(int(v) for v in rng.integers(-support, support + 1, size=dim))
            if not any(m):
                continue
            c = (rng.normal() + 1j * rng.normal()) * 0.5 * amp
            coeffs[m] = coeffs.get(m, 0.0) + c
            mc = tuple(-v for v in m)
            coeffs[mc] = coeffs.get(mc, 0.0) + np.conj(c)
        return pot.make_potential(dim, coeffs)

    return make
