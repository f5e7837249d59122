import numpy as np
import pytest

from mvseg3d.voldata import INTENSITY, LABEL, Volume


def random_intensity(shape, seed=0):
    rng = np.random.default_rng(seed)
    return Volume(rng.random(shape, dtype=np.float32), kind=INTENSITY)


def random_label(shape, classes=4, seed=0):
    rng = np.random.default_rng(seed)
    return Volume(rng.integers(0, classes, size=shape), kind=LABEL, classes=classes)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
