"""Quality metrics (PSNR, PSNR-B, SSIM, bpp) and rate-distortion sweeps."""

import json
import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy import signal

from . import codec

PEAK = 255.0


def _pixels(img):
    data = img.data if hasattr(img, "data") else np.asarray(img)
    return data.astype(np.float64)


def _luma(img):
    p = _pixels(img)
    return 0.299 * p[:, :, 0] + 0.587 * p[:, :, 1] + 0.114 * p[:, :, 2]


def _check_dims(a, b):
    pa, pb = _pixels(a), _pixels(b)
    if pa.shape != pb.shape:
        raise ValueError(f"image dimensions differ: {pa.shape} vs {pb.shape}")
    return pa, pb


def psnr(a, b):
    """Peak signal-to-noise ratio over all RGB samples; +inf when identical."""
    pa, pb = _check_dims(a, b)
    mse = np.mean((pa - pb) ** 2)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK**2 / mse)


def _blocking_effect_factor(test_luma, block):
    """Yim-Bovik style boundary penalty on the degraded image's luma.

    Mean squared differences across block-aligned neighbor pairs are
    compared with those across all other neighbor pairs; the excess,
    log-weighted by block size against image size, is returned (>= 0).
    """
    h, w = test_luma.shape
    dh = np.diff(test_luma, axis=1) ** 2  # horizontal neighbor pairs (h, w-1)
    dv = np.diff(test_luma, axis=0) ** 2  # vertical neighbor pairs (h-1, w)
    hb = np.zeros(w - 1, dtype=bool)
    hb[block - 1::block] = True  # pair (c, c+1) straddles a boundary
    vb = np.zeros(h - 1, dtype=bool)
    vb[block - 1::block] = True

    boundary = np.concatenate([dh[:, hb].ravel(), dv[vb, :].ravel()])
    interior = np.concatenate([dh[:, ~hb].ravel(), dv[~vb, :].ravel()])
    if boundary.size == 0 or interior.size == 0:
        return 0.0
    d_b = boundary.mean()
    d_bc = interior.mean()
    if d_b <= d_bc:
        return 0.0
    eta = math.log2(block) / math.log2(min(h, w))
    return eta * (d_b - d_bc)


def psnr_b(reference, test, block=8):
    """Blocking-sensitive PSNR: the MSE is inflated by a boundary penalty.

    The penalty is computed on the test image's luma, so the metric is
    asymmetric in its arguments (reference first, degraded image second).
    Never exceeds psnr(reference, test).
    """
    pa, pb = _check_dims(reference, test)
    if min(pa.shape[0], pa.shape[1]) < block:
        raise ValueError(f"images smaller than one {block}x{block} block")
    mse = np.mean((pa - pb) ** 2)
    bef = _blocking_effect_factor(_luma(test), block)
    total = mse + bef
    if total == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK**2 / total)


def _gaussian_window(size=11, sigma=1.5):
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2.0 * sigma**2))
    return g / g.sum()


def ssim(a, b, window=11, sigma=1.5, k1=0.01, k2=0.03):
    """Mean structural similarity on luma with a Gaussian window."""
    pa, pb = _check_dims(a, b)
    x, y = _luma(a), _luma(b)
    if min(x.shape) < window:
        raise ValueError(f"images must be at least {window}x{window} for ssim")
    g = _gaussian_window(window, sigma)

    def smooth(img):
        return signal.convolve2d(
            signal.convolve2d(img, g[None, :], mode="valid"), g[:, None], mode="valid")

    c1 = (k1 * PEAK) ** 2
    c2 = (k2 * PEAK) ** 2
    mu_x = smooth(x)
    mu_y = smooth(y)
    var_x = smooth(x * x) - mu_x**2
    var_y = smooth(y * y) - mu_y**2
    cov = smooth(x * y) - mu_x * mu_y
    score = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / \
            ((mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2))
    return float(score.mean())


def bpp(file_size_bytes, width, height):
    """Bits per pixel of a compressed payload."""
    if width * height <= 0:
        raise ValueError("bpp needs a nonzero pixel count")
    return 8.0 * file_size_bytes / (width * height)


@dataclass(frozen=True)
class RdRecord:
    """One rate-distortion point: mean metrics over a set at one quality."""

    method: str
    q: int
    bpp: float
    psnr: float
    psnr_b: float
    ssim: float


def rd_sweep(images, q_list, decoder=None, method=None, on_skip=None):
    """Encode/decode every image at each quality and average the metrics.

    `decoder` maps JpegSpectra to an RgbImage; None selects the
    conventional decode path. Per-image failures are skipped and reported
    through `on_skip(q, index, exception)`; a quality with no surviving
    images yields no record.
    """
    if decoder is None:
        decoder = codec.decode_baseline
        method = method or "baseline"
    method = method or "model"

    records = []
    for q in q_list:
        bpps, psnrs, psnr_bs, ssims = [], [], [], []
        for idx, img in enumerate(images):
            try:
                data = codec.encode_jpeg(img, q)
                decoded = decoder(codec.parse_jpeg(data))
                psnrs.append(psnr(img, decoded))
                psnr_bs.append(psnr_b(img, decoded))
                ssims.append(ssim(img, decoded))
                bpps.append(bpp(len(data), img.width, img.height))
            except Exception as exc:  # noqa: BLE001 - skip-and-report policy
                if on_skip is not None:
                    on_skip(q, idx, exc)
        if bpps:
            records.append(RdRecord(
                method=method, q=int(q), bpp=float(np.mean(bpps)),
                psnr=float(np.mean(psnrs)), psnr_b=float(np.mean(psnr_bs)),
                ssim=float(np.mean(ssims))))
    return records


def _fmt(x):
    return "inf" if math.isinf(x) else f"{x:.6f}"


def write_rd_csv(records, path):
    with open(path, "w") as fh:
        fh.write("method,q,bpp,psnr,psnr_b,ssim\n")
        for r in records:
            fh.write(f"{r.method},{r.q},{_fmt(r.bpp)},{_fmt(r.psnr)},"
                     f"{_fmt(r.psnr_b)},{_fmt(r.ssim)}\n")


def write_rd_json(records, path):
    rows = []
    for r in records:
        row = asdict(r)
        for key in ("bpp", "psnr", "psnr_b", "ssim"):
            if math.isinf(row[key]):
                row[key] = "inf"
        rows.append(row)
    with open(path, "w") as fh:
        json.dump(rows, fh, indent=2)
        fh.write("\n")
