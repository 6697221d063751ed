"""Desk-scale synthetic image generator: gradients, Gabor patches, filtered noise.

Keeps training and evaluation self-contained without an external corpus.
Patterns modulate mostly along the luminance axis with a milder chroma
component, which is roughly how photographic content behaves.
"""

import numpy as np
from scipy import ndimage

from .codec import RgbImage


def _to_image(field):
    return RgbImage(np.clip(np.round(field), 0, 255).astype(np.uint8))


def gradient_image(h, w, rng):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    yy /= max(h - 1, 1)
    xx /= max(w - 1, 1)
    base = rng.uniform(60, 190, 3)
    slope = rng.uniform(-90, 90, (2, 3))
    field = base + yy[..., None] * slope[0] + xx[..., None] * slope[1]
    return _to_image(field)


def gabor_image(h, w, rng):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cy, cx = rng.uniform(0.25, 0.75) * h, rng.uniform(0.25, 0.75) * w
    theta = rng.uniform(0, np.pi)
    freq = rng.uniform(0.03, 0.2)
    sigma = rng.uniform(0.15, 0.45) * min(h, w)
    phase = rng.uniform(0, 2 * np.pi)
    u = (xx - cx) * np.cos(theta) + (yy - cy) * np.sin(theta)
    r2 = (xx - cx) ** 2 + (yy - cy) ** 2
    pattern = np.cos(2 * np.pi * freq * u + phase) * np.exp(-r2 / (2 * sigma**2))
    base = rng.uniform(80, 170, 3)
    luma_amp = rng.uniform(40, 80)
    chroma_amp = rng.uniform(-15, 15, 3)
    field = base + pattern[..., None] * (luma_amp + chroma_amp)
    return _to_image(field)


def filtered_noise_image(h, w, rng):
    sigma = rng.uniform(1.5, 4.0)
    luma = ndimage.gaussian_filter(rng.normal(size=(h, w)), sigma)
    chroma = ndimage.gaussian_filter(rng.normal(size=(h, w, 2)), (2 * sigma, 2 * sigma, 0))

    def stretch(a, lo, hi):
        span = a.max() - a.min()
        return lo + (a - a.min()) * (hi - lo) / (span if span > 0 else 1.0)

    field = np.empty((h, w, 3))
    base = stretch(luma, 40, 215)
    field[:, :, 0] = base + stretch(chroma[:, :, 0], -25, 25)
    field[:, :, 1] = base
    field[:, :, 2] = base + stretch(chroma[:, :, 1], -25, 25)
    return _to_image(field)


GENERATORS = (gradient_image, gabor_image, filtered_noise_image)


def generate_images(count, size, seed=0):
    """A deterministic list of `count` synthetic images of `size` x `size`."""
    rng = np.random.default_rng(seed)
    return [GENERATORS[i % len(GENERATORS)](size, size, rng) for i in range(count)]
