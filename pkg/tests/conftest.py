import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def random_realizable_state(rng, N, e1_cap=0.95):
    """A moment vector built from a positive intensity sample, so it is
    realizable by construction (mixture of forward/backward beams plus
    an isotropic floor)."""
    from scipy.special import roots_legendre

    x, w = roots_legendre(48)
    floor = rng.uniform(0.05, 1.0)
    beams = rng.integers(1, 4)
    intensity = np.full_like(x, floor)
    for _ in range(beams):
        mu0 = rng.uniform(-0.98, 0.98)
        width = rng.uniform(0.05, 0.7)
        amp = rng.uniform(0.0, 4.0)
        intensity = intensity + amp * np.exp(-((x - mu0) ** 2) / (2 * width**2))
    k = np.arange(N + 1)[:, None]
    E = (w * x**k * intensity).sum(axis=1)
    if abs(E[1] / E[0]) > e1_cap:
        E[1] = np.sign(E[1]) * e1_cap * E[0]
    return E
