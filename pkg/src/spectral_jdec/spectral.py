"""Exact DCT, quantization, sub-block and normalization math for 8x8 JPEG spectra.

All functions are pure and operate on float64 numpy arrays (integer arrays
for quantized coefficients and quantization tables). The 8x8 block is the
unit of currency throughout; grids of blocks are handled by the codec and
model layers.
"""

from dataclasses import dataclass

import numpy as np

BLOCK = 8

# Quantized coefficients must fit baseline JPEG's 12-bit signed range.
COEFF_MIN = -2048
COEFF_MAX = 2047


@dataclass(frozen=True)
class DctBasis:
    """Orthonormal DCT-II basis matrix; row = frequency, column = sample."""

    n: int
    m: np.ndarray


def dct_basis(n):
    """Build the n-point orthonormal DCT basis.

    Entry (u, k) = alpha_u * cos(pi * u * (2k + 1) / (2n)) with
    alpha_0 = sqrt(1/n) and alpha_u = sqrt(2/n) for u > 0.
    """
    if n < 1:
        raise ValueError(f"block size must be >= 1, got {n}")
    u = np.arange(n, dtype=np.float64)[:, None]
    k = np.arange(n, dtype=np.float64)[None, :]
    m = np.cos(np.pi * u * (2.0 * k + 1.0) / (2.0 * n))
    alpha = np.full(n, np.sqrt(2.0 / n))
    alpha[0] = np.sqrt(1.0 / n)
    return DctBasis(n=n, m=alpha[:, None] * m)


_BASIS_CACHE = {}


def _basis(n):
    if n not in _BASIS_CACHE:
        _BASIS_CACHE[n] = dct_basis(n).m
    return _BASIS_CACHE[n]


def _check_8x8(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (BLOCK, BLOCK):
        raise ValueError(f"{name} must be 8x8, got shape {a.shape}")
    return a


def dct2(block):
    """Forward 2D DCT of one 8x8 spatial block: X = D @ I @ D.T."""
    block = _check_8x8(block, "block")
    d = _basis(BLOCK)
    return d @ block @ d.T


def idct2(spectrum):
    """Inverse 2D DCT of one 8x8 spectrum: I = D.T @ X @ D."""
    spectrum = _check_8x8(spectrum, "spectrum")
    d = _basis(BLOCK)
    return d.T @ spectrum @ d


def _round_half_away(x):
    # libjpeg-style rounding: ties go away from zero, not to even.
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize(spectrum, table):
    """Quantize a spectrum: C = round(X / Q), rounding half away from zero.

    Raises ValueError if any quantized coefficient falls outside the
    baseline 12-bit signed range, which signals an invalid input spectrum.
    """
    spectrum = _check_8x8(spectrum, "spectrum")
    table = np.asarray(table)
    if table.shape != (BLOCK, BLOCK) or np.any(table < 1):
        raise ValueError("quantization table must be 8x8 with entries >= 1")
    coeffs = _round_half_away(spectrum / table)
    if np.any(coeffs < COEFF_MIN) or np.any(coeffs > COEFF_MAX):
        raise ValueError("quantized coefficient exceeds 12-bit signed range")
    return coeffs.astype(np.int32)


def dequantize(coeffs, table):
    """Rebuild a spectrum from quantized coefficients: X = C * Q."""
    coeffs = np.asarray(coeffs)
    table = np.asarray(table)
    return coeffs.astype(np.float64) * table.astype(np.float64)


def subblock_convert(spectrum, b):
    """Re-express an 8x8 spectrum as a grid of b x b DCT spectra.

    Output shape is (8//b, 8//b, b, b): entry [r, c] is the b-point DCT of
    the spatial tile at rows r*b.. and columns c*b.. of the inverse
    transform of `spectrum`. Equivalent to conjugating the spatial block
    with the block-diagonal matrix holding 8//b copies of the b-point
    basis. b = 8 is the identity; b = 1 yields the spatial pixels.
    """
    if b not in (1, 2, 4, 8):
        raise ValueError(f"sub-block size must be one of 1, 2, 4, 8, got {b}")
    spatial = idct2(spectrum)
    g = BLOCK // b
    db = _basis(b)
    tiles = spatial.reshape(g, b, g, b).transpose(0, 2, 1, 3)
    return np.einsum("ui,rcij,vj->rcuv", db, tiles, db)


def subblock_invert(grid, b):
    """Inverse of subblock_convert: grid of b x b spectra -> 8x8 spectrum."""
    if b not in (1, 2, 4, 8):
        raise ValueError(f"sub-block size must be one of 1, 2, 4, 8, got {b}")
    grid = np.asarray(grid, dtype=np.float64)
    g = BLOCK // b
    if grid.shape != (g, g, b, b):
        raise ValueError(f"grid shape {grid.shape} inconsistent with b={b}")
    db = _basis(b)
    tiles = np.einsum("ui,rcuv,vj->rcij", db, grid, db)
    spatial = tiles.transpose(0, 2, 1, 3).reshape(BLOCK, BLOCK)
    return dct2(spatial)


def normalization_bounds():
    """Per-frequency magnitude bounds b[u, v] = 128 * s_u * s_v.

    s_u is the absolute row sum of the 8-point basis, so |X[u, v]| <= b[u, v]
    for the spectrum of any spatial block with samples in [-128, 127].
    Dividing by these bounds maps legal spectra into [-1, 1].
    """
    s = np.abs(_basis(BLOCK)).sum(axis=1)
    return 128.0 * np.outer(s, s)


def normalize_spectrum(spectrum, bounds):
    """Map a spectrum into [-1, 1] by elementwise division by `bounds`."""
    bounds = np.asarray(bounds, dtype=np.float64)
    if np.any(bounds <= 0):
        raise ValueError("normalization bounds must be positive")
    return np.asarray(spectrum, dtype=np.float64) / bounds


def denormalize_spectrum(normalized, bounds):
    """Exact inverse of normalize_spectrum."""
    return np.asarray(normalized, dtype=np.float64) * np.asarray(bounds, dtype=np.float64)


# Scan position -> natural (row-major) position, per the JPEG zigzag path.
ZIGZAG_ORDER = np.array([
    0,  1,  8, 16,  9,  2,  3, 10,
    17, 24, 32, 25, 18, 11,  4,  5,
    12, 19, 26, 33, 40, 48, 41, 34,
    27, 20, 13,  6,  7, 14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36,
    29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46,
    53, 60, 61, 54, 47, 55, 62, 63,
], dtype=np.int64)

# Natural position -> scan position (the inverse permutation).
INVERSE_ZIGZAG = np.argsort(ZIGZAG_ORDER)


def zigzag_scan(block):
    """Flatten an 8x8 block into the 64-vector in zigzag scan order."""
    block = np.asarray(block)
    if block.shape != (BLOCK, BLOCK):
        raise ValueError(f"block must be 8x8, got {block.shape}")
    return block.reshape(64)[ZIGZAG_ORDER].copy()


def inverse_zigzag(vec):
    """Rebuild an 8x8 block from its zigzag-ordered 64-vector."""
    vec = np.asarray(vec)
    if vec.shape != (64,):
        raise ValueError(f"expected a 64-vector, got shape {vec.shape}")
    out = np.empty(64, dtype=vec.dtype)
    out[ZIGZAG_ORDER] = vec
    return out.reshape(BLOCK, BLOCK)


# Annex-K reference quantization tables (luma, chroma).
BASE_LUMA_QT = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.int64)

BASE_CHROMA_QT = np.array([
    [17, 18, 24, 47, 99, 99, 99, 99],
    [18, 21, 26, 66, 99, 99, 99, 99],
    [24, 26, 56, 99, 99, 99, 99, 99],
    [47, 66, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
], dtype=np.int64)


def quality_to_qtables(q):
    """IJG quality scaling of the reference tables.

    s = 5000 / max(q, 1) for q < 50, else 200 - 2q; each entry becomes
    clamp(floor((base * s + 50) / 100), 1, 255). q = 50 reproduces the
    reference tables, q = 100 gives all ones.
    """
    if not 0 <= q <= 100:
        raise ValueError(f"quality factor must be in [0, 100], got {q}")
    s = 5000 // max(int(q), 1) if q < 50 else 200 - 2 * int(q)

    def scale(base):
        t = (base * s + 50) // 100
        return np.clip(t, 1, 255).astype(np.int64)

    return scale(BASE_LUMA_QT), scale(BASE_CHROMA_QT)
