import numpy as np
import pytest

from mfbootstrap import MultiSeries


def ar1_path(phi: float, n: int, seed: int, burn: int = 200) -> np.ndarray:
    """Unit-innovation AR(1) sample of length n after burn-in."""
    rng = np.random.default_rng(seed)
    innov = rng.standard_normal(n + burn)
    z = np.zeros(n + burn)
    for t in range(1, n + burn):
        z[t] = phi * z[t - 1] + innov[t]
    return z[burn:]


def ar1_oracle_blocks(phi: float, max_lag: int) -> np.ndarray:
    """True autocovariance blocks of a unit-innovation AR(1), d=1."""
    return (phi ** np.arange(max_lag + 1) / (1.0 - phi * phi))[:, None, None]


@pytest.fixture
def small_series() -> MultiSeries:
    rng = np.random.default_rng(314)
    return MultiSeries(rng.standard_normal((2, 60)))
