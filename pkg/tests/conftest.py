import math

import numpy as np
import pytest

from blab import geometry as geo
from blab.distributions import default_spec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def eps_default(n):
    return min(0.5, 0.5 * (math.sqrt(n) - 1))


def three_sigma(p, trials):
    return 3 * math.sqrt(p * (1 - p) / trials)


@pytest.fixture(params=[2, 4, 8])
def base_spec(request):
    return default_spec(request.param)


def orthant_fraction(zetas, signs):
    """Brute-force oracle: fraction of draws NOT in the closed orthant opposite to ``signs``."""
    inside = np.all(zetas * signs <= 0, axis=1)
    return 1 - inside.mean()


__all__ = ["eps_default", "three_sigma", "orthant_fraction", "geo"]
