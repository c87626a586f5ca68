import numpy as np
import pytest

from infodecomp import GmmModel


@pytest.fixture(scope="session")
def bench_gmm() -> GmmModel:
    """1-D two-component benchmark: means +-1, sd 0.5, equal priors."""
    return GmmModel(
        shape=(1, 1, 1),
        weights=np.array([0.5, 0.5]),
        means=np.array([[1.0], [-1.0]]),
        variances=np.array([0.25, 0.25]),
        subsets={"c0": (0,), "c1": (1,)},
    )


@pytest.fixture(scope="session")
def xor_gmm() -> GmmModel:
    """Four components keyed by two binary phrases; the mean is fixed by
    their XOR, so each phrase alone is uninformative about x."""
    means = np.array([[1.0], [-1.0], [-1.0], [1.0]])  # (p,q) = 00, 01, 10, 11
    return GmmModel(
        shape=(1, 1, 1),
        weights=np.full(4, 0.25),
        means=means,
        variances=np.full(4, 0.25),
        subsets={
            "p0": (0, 1),
            "p1": (2, 3),
            "q0": (0, 2),
            "q1": (1, 3),
            "any": (0, 1, 2, 3),
        },
    )


@pytest.fixture(scope="session")
def field_gmm() -> GmmModel:
    """(2, 4, 4) mixture with spatially structured components.

    Components 0/1 light up the left half, 2/3 the right half; 'sun' and
    'sol' name the same subset (synonyms), 'left'/'right' split spatially,
    'bright'/'dim' split orthogonally.
    """
    c, h, w = 2, 4, 4
    d = c * h * w
    means = np.zeros((4, c, h, w))
    means[0, :, :, :2] = 2.0  # left bright
    means[1, :, :, :2] = -2.0  # left dim
    means[2, :, :, 2:] = 2.0  # right bright
    means[3, :, :, 2:] = -2.0  # right dim
    return GmmModel(
        shape=(c, h, w),
        weights=np.full(4, 0.25),
        means=means.reshape(4, d),
        variances=np.full(4, 0.16),
        subsets={
            "left": (0, 1),
            "right": (2, 3),
            "bright": (0, 2),
            "dim": (1, 3),
            "sun": (0, 2),
            "sol": (0, 2),
            "all": (0, 1, 2, 3),
        },
    )
