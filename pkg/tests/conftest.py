import pathlib

import numpy as np
import pytest

from spectral_jdec.codec import RgbImage
from spectral_jdec.imageio import read_ppm

DATA_DIR = pathlib.Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def photo():
    return RgbImage(read_ppm(DATA_DIR / "photo.ppm"))


def gradient_image(h, w, seed=0):
    """Smooth synthetic image: random linear ramps per channel."""
    g = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    chans = []
    for _ in range(3):
        a, b = g.uniform(-1, 1, 2)
        base = g.uniform(60, 200)
        chans.append(base + a * xx * 128 / max(w, 1) + b * yy * 128 / max(h, 1))
    return RgbImage(np.clip(np.stack(chans, axis=-1), 0, 255).astype(np.uint8))


def noise_image(h, w, seed=0):
    g = np.random.default_rng(seed)
    return RgbImage(g.integers(0, 256, (h, w, 3), dtype=np.uint8))
