import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def solid_sprite(h, w, color=(200, 10, 10), alpha=255):
    """Uniform RGBA sprite."""
    out = np.zeros((h, w, 4), dtype=np.uint8)
    out[:, :, :3] = color
    out[:, :, 3] = alpha
    return out


def random_rgb(rng, h, w):
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)


def random_rgba(rng, h, w):
    return rng.integers(0, 256, size=(h, w, 4), dtype=np.uint8)
