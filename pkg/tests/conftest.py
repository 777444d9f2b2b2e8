import numpy as np
import pytest

import conflow

TWO_PI = 2.0 * np.pi
COS_PHASE = np.pi / 2.0  # sinusoidal spec phase that turns sin into cos


def grid1d(n=4, N=128, L=TWO_PI):
    return conflow.GridSpec(n, 1, (N,), (L,))


def smooth_field(grid, rng, amp=1.0, modes=4):
    """Band-limited random field with unit-normalized sup."""
    x = grid.axis_coordinates(0)
    v = np.zeros_like(x)
    for k in range(1, modes + 1):
        v += (rng.normal() * np.cos(k * x) + rng.normal() * np.sin(k * x)) / k**2
    v = v / max(1e-12, np.abs(v).max())
    return conflow.ScalarField(grid, np.broadcast_to(amp * v, grid.shape).copy())


@pytest.fixture
def g64():
    return grid1d(N=64)


@pytest.fixture
def g128():
    return grid1d(N=128)


@pytest.fixture
def g256():
    return grid1d(N=256)
