import numpy as np
import pytest

from extraplab.model import LinearRNN


def random_model(rng, d, n=1, m=1, scale=None):
    """Random triple with A scaled to keep powers tame over short horizons."""
    if scale is None:
        scale = 1.0 / np.sqrt(d)
    return LinearRNN(
        scale * rng.standard_normal((d, d)),
        rng.standard_normal((d, n)),
        rng.standard_normal((m, d)),
    )


def random_symmetric(rng, d, scale=1.0):
    g = rng.standard_normal((d, d))
    return scale * (g + g.T) / 2.0


@pytest.fixture
def rng():
    return np.random.default_rng(20260816)
