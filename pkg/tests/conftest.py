import numpy as np
import pytest
from scipy.ndimage import uniform_filter

from blurforge import Image


def multi_octave_texture(seed, height, width, channels=1):
    """Noise with energy at several scales; good fodder for flow estimation."""
    rng = np.random.default_rng(seed)
    tex = np.zeros((height, width, channels))
    for size, amp in ((1, 0.3), (3, 0.5), (9, 1.0), (21, 1.0)):
        layer = rng.random((height, width, channels))
        if size > 1:
            layer = uniform_filter(layer, size=(size, size, 1), mode="wrap")
        tex += amp * (layer - layer.mean())
    tex -= tex.min()
    tex /= tex.max()
    return tex


def random_image(rng, height, width, channels=3):
    return Image(rng.random((height, width, channels)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
