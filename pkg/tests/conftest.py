import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from whflow.grid import Grid, integrate, zero_mean

settings.register_profile(
    "whflow", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("whflow")


def trig_field(grid, coeffs, mean=0.0):
    """Sum of low Fourier modes; ``coeffs`` is a list of (kx, ky, a, phase)."""
    x = grid.coords()
    f = np.full(grid.shape, float(mean))
    for kx, ky, a, ph in coeffs:
        k = (kx, ky)[: grid.dim]
        f = f + a * np.cos(sum(2 * np.pi * ki * xi for ki, xi in zip(k, x)) + ph)
    return f


mode = st.tuples(
    st.integers(0, 3), st.integers(0, 3),
    st.floats(-1.0, 1.0, allow_nan=False), st.floats(0.0, 6.28, allow_nan=False),
)
modes = st.lists(mode, min_size=1, max_size=4)


@st.composite
def densities(draw, grid, max_amp=0.6):
    """Smooth positive unit-mass densities on ``grid``."""
    coeffs = draw(modes)
    f = trig_field(grid, coeffs)
    scale = np.abs(f).max()
    # near-constant draws (subnormal amplitudes) would overflow when rescaled
    f = max_amp * f / scale if scale > 1e-8 else np.zeros_like(f)
    rho = 1.0 + f
    return rho / integrate(rho)


@st.composite
def zero_mean_fields(draw, grid):
    f = zero_mean(trig_field(grid, draw(modes)))
    return f


GRIDS = [Grid.regular(1, 32), Grid.regular(2, 16)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
