import numpy as np
import pytest

from cv.src.generators import draw_iid
from utils.models import ModelSpec


def _s6_sample(n, c=1.0, seed=0):
    sample, _ = draw_iid(ModelSpec("S6", n, c=c), np.random.default_rng(seed))
    return sample


@pytest.fixture
def make_s6():
    """Factory for i.i.d. samples from the S6 model (H0 true)."""
    return _s6_sample


@pytest.fixture
def s6_100():
    return _s6_sample(100, seed=12345)
