"""Neural JPEG decoder operating on quantized spectra.

Pipeline: group spectra embedding (sub-block converted luma + chroma
fibers to one latent grid) -> residual CNN feature extractor -> per-cell
continuous cosine features (learned frequencies and amplitudes, modulated
by an encoding of the quantization tables) -> pointwise MLP to RGB. Every
latent cell maps to a b x b pixel tile whose local coordinates can be
sampled at any density, so decoding at integer upsampling ratios falls out
of the same machinery.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import spectral
from .codec import RgbImage

ABLATIONS = ("full", "no_ccf", "no_subblock", "neither", "fourier")

QTABLE_VEC = 128  # two 8x8 tables, flattened


@dataclass(frozen=True)
class ModelConfig:
    b: int = 4              # pixels per latent cell side
    c: int = 32             # embedding channels
    k: int = 64             # cosine feature channels
    n_res_blocks: int = 4
    ablation: str = "full"

    def __post_init__(self):
        if self.b not in (2, 4, 8):
            # b/2-sized chroma sub-blocks require an even b no larger than 8
            raise ValueError(f"cell size must be 2, 4 or 8, got {self.b}")
        if self.c < 1 or self.k < 1 or self.n_res_blocks < 0:
            raise ValueError("channel counts must be positive and depth nonnegative")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}, pick from {ABLATIONS}")

    @property
    def uses_subblock(self):
        return self.ablation not in ("no_subblock", "neither")

    @property
    def uses_ccf(self):
        return self.ablation not in ("no_ccf", "neither")

    @property
    def cell(self):
        """Pixel extent of one latent cell (8 when embedding raw spectra)."""
        return self.b if self.uses_subblock else 8

    @property
    def embed_in(self):
        # b^2 luma + 2*(b/2)^2 chroma values per cell, or whole 8x8 spectra
        return 3 * self.b * self.b // 2 if self.uses_subblock else 3 * 64

    @property
    def feature_dim(self):
        """Channel width of the features entering the decoder MLP."""
        if not self.uses_ccf:
            return self.c + 2 + QTABLE_VEC
        return 2 * self.k if self.ablation == "fourier" else self.k


def param_shapes(config):
    """Ordered {name: shape} for every trainable array."""
    c, k = config.c, config.k
    shapes = {"embed_w": (c, config.embed_in), "embed_b": (c,)}
    for i in range(config.n_res_blocks):
        shapes[f"res{i}_w1"] = (c, c, 3, 3)
        shapes[f"res{i}_b1"] = (c,)
        shapes[f"res{i}_w2"] = (c, c, 3, 3)
        shapes[f"res{i}_b2"] = (c,)
    shapes["tail_w"] = (c, c, 3, 3)
    shapes["tail_b"] = (c,)
    shapes["hf_w1"] = (c, c, 3, 3)
    shapes["hf_b1"] = (c,)
    shapes["hf_w2"] = (2 * k, c, 3, 3)
    shapes["hf_b2"] = (2 * k,)
    shapes["hc_w1"] = (c, c, 3, 3)
    shapes["hc_b1"] = (c,)
    shapes["hc_w2"] = (k, c, 3, 3)
    shapes["hc_b2"] = (k,)
    shapes["hq_w"] = (k, QTABLE_VEC)
    shapes["hq_b"] = (k,)
    widths = [config.feature_dim, k, k, k, k, 3]
    for i in range(5):
        shapes[f"dec{i}_w"] = (widths[i + 1], widths[i])
        shapes[f"dec{i}_b"] = (widths[i + 1],)
    return shapes


@dataclass
class ModelParams:
    """All trainable weights, keyed by layer name."""

    config: ModelConfig
    arrays: dict

    def __post_init__(self):
        expected = param_shapes(self.config)
        if list(self.arrays) != list(expected):
            raise ValueError("parameter set does not match the architecture")
        for name, shape in expected.items():
            t = self.arrays[name]
            if tuple(t.values.shape) != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {t.values.shape}")
            if not np.all(np.isfinite(t.values)):
                raise ValueError(f"{name}: non-finite values")

    def __getitem__(self, name):
        return self.arrays[name]

    def tensors(self):
        return list(self.arrays.values())

    def names(self):
        return list(self.arrays)

    @property
    def dtype(self):
        return self.arrays["embed_w"].values.dtype


@dataclass(frozen=True)
class BlockGrid:
    """Half-sample-centered local coordinates covering one cell at ratio r."""

    b: int
    r: int
    delta: np.ndarray  # (r*b,) values (i + 1/2) / r

    @property
    def coords(self):
        n = len(self.delta)
        out = np.empty((n, n, 2))
        out[:, :, 0] = self.delta[:, None]
        out[:, :, 1] = self.delta[None, :]
        return out


def make_block_grid(b, r=1):
    if b < 1 or r < 1:
        raise ValueError("cell size and ratio must be >= 1")
    delta = (np.arange(r * b, dtype=np.float64) + 0.5) / r
    return BlockGrid(b=b, r=r, delta=delta)


@dataclass
class CcfOutput:
    """Per-cell continuous spectrum estimate and its sampled features."""

    amplitudes: np.ndarray  # (k,)
    f_h: np.ndarray         # (k,)
    f_w: np.ndarray         # (k,)
    features: np.ndarray    # (r*b, r*b, k)


def cosine_features(amplitudes, f_h, f_w, grid):
    """Sample amp[k] * cos(pi*f_h[k]*d_i) * cos(pi*f_w[k]*d_j) on the grid.

    Accepts plain arrays (used directly and by tests probing the cosine
    expansion) with any leading batch axes shared by the three inputs.
    """
    amplitudes = np.asarray(amplitudes, dtype=np.float64)
    d = grid.delta
    ch = np.cos(np.pi * np.asarray(f_h)[..., None, :] * d[:, None])  # (..., rb, k)
    cw = np.cos(np.pi * np.asarray(f_w)[..., None, :] * d[:, None])
    return amplitudes[..., None, None, :] * ch[..., :, None, :] * cw[..., None, :, :]


# ---------------------------------------------------------------------------
# differentiable pipeline pieces (Tensor in, Tensor out)

def _const(values, dtype):
    return ad.tensor(np.asarray(values, dtype=dtype), requires_grad=False, dtype=dtype)


def _fiber_conv_pair(cells, w1, b1, w2, b2):
    """Two 3x3 convs with a ReLU, applied to each cell as an isolated 1x1 map.

    Padding contributes only zeros around a 1x1 map, so just the center
    taps act; the spatial receptive field of the pipeline stays entirely
    inside the feature extractor and each cell's estimate depends on its
    own fiber alone.
    """
    m, c = cells.values.shape
    x = ad.reshape(cells, (m, c, 1, 1))
    h = ad.relu(ad.conv3x3(x, w1, b1))
    out = ad.conv3x3(h, w2, b2)
    return ad.reshape(out, (m, out.values.shape[1]))


def _embed_cells(cell_values, params):
    x = ad.tensor(cell_values, requires_grad=False, dtype=params.dtype)
    return ad.linear(x, params["embed_w"], params["embed_b"])


def _subblock_cells(grids, b):
    """(ny, nx, 8, 8) spectra -> (ny*g, nx*g, b*b) per-cell sub-block fibers."""
    grids = np.asarray(grids, dtype=np.float64)
    ny, nx = grids.shape[:2]
    g = 8 // b
    d8 = spectral.dct_basis(8).m
    db = spectral.dct_basis(b).m
    spatial = np.einsum("iu,yxuv,jv->yxij", d8.T, grids, d8.T)
    tiles = spatial.reshape(ny, nx, g, b, g, b).transpose(0, 2, 1, 4, 3, 5)
    sub = np.einsum("ui,yrxcij,vj->yrxcuv", db, tiles, db)
    return sub.reshape(ny * g, nx * g, b * b)


def _group_embed_batch(spectra_y, spectra_cb, spectra_cr, params, config):
    """Batched embedding: (n, ny, nx, 8, 8) grids -> Tensor (n, c, hc, wc)."""
    spectra_y = np.asarray(spectra_y, dtype=np.float64)
    spectra_cb = np.asarray(spectra_cb, dtype=np.float64)
    spectra_cr = np.asarray(spectra_cr, dtype=np.float64)
    n, ny, nx = spectra_y.shape[:3]
    if spectra_cb.shape[1:3] != (ny // 2, nx // 2) or spectra_cb.shape != spectra_cr.shape:
        raise ValueError(
            f"luma grid {spectra_y.shape[1:3]} must be twice the chroma grids "
            f"{spectra_cb.shape[1:3]} / {spectra_cr.shape[1:3]}")

    def sub_cells(grids, b):
        # the transform is per 8x8 block, so images can share the row axis
        rows = grids.shape[1]
        flat = _subblock_cells(grids.reshape(n * rows, grids.shape[2], 8, 8), b)
        g = 8 // b
        return flat.reshape(n, rows * g, flat.shape[1], flat.shape[2])

    if config.uses_subblock:
        b = config.b
        cells = np.concatenate([
            sub_cells(spectra_y, b),
            sub_cells(spectra_cb, b // 2),
            sub_cells(spectra_cr, b // 2),
        ], axis=-1)
    else:
        rep = lambda a: np.repeat(np.repeat(a, 2, axis=1), 2, axis=2)
        cells = np.concatenate([
            spectra_y.reshape(*spectra_y.shape[:3], 64),
            rep(spectra_cb.reshape(*spectra_cb.shape[:3], 64)),
            rep(spectra_cr.reshape(*spectra_cr.shape[:3], 64)),
        ], axis=-1)

    _, hc, wc, width = cells.shape
    assert width == config.embed_in
    z = _embed_cells(cells.reshape(n * hc * wc, width), params)
    return ad.transpose(ad.reshape(z, (n, hc, wc, config.c)), (0, 3, 1, 2))


def group_embed(spectra_y, spectra_cb, spectra_cr, q_pair, params, config):
    """Joint luma/chroma spectra embedding into the initial latent map.

    Inputs are normalized spectra grids of shape (ny, nx, 8, 8) for luma
    and (ny/2, nx/2, 8, 8) for each chroma channel. Returns a Tensor of
    shape (1, c, ny*8/cell, nx*8/cell). The quantization pair rides along
    untouched; it enters the pipeline downstream.
    """
    del q_pair
    return _group_embed_batch(np.asarray(spectra_y, dtype=np.float64)[None],
                              np.asarray(spectra_cb, dtype=np.float64)[None],
                              np.asarray(spectra_cr, dtype=np.float64)[None],
                              params, config)


def encode_features(zp, params, config):
    """Residual CNN over the latent map; a global skip keeps z' reachable."""
    h = zp
    for i in range(config.n_res_blocks):
        r1 = ad.relu(ad.conv3x3(h, params[f"res{i}_w1"], params[f"res{i}_b1"]))
        r2 = ad.conv3x3(r1, params[f"res{i}_w2"], params[f"res{i}_b2"])
        h = ad.add(h, r2)
    return ad.add(zp, ad.conv3x3(h, params["tail_w"], params["tail_b"]))


def _normalized_q_vector(q_luma, q_chroma):
    bounds = spectral.normalization_bounds()
    return np.concatenate([
        (np.asarray(q_luma, dtype=np.float64) / bounds).reshape(64),
        (np.asarray(q_chroma, dtype=np.float64) / bounds).reshape(64),
    ])


def _ccf_tensors(cells, q_vec, params):
    """Coefficient, frequency and table fibers for a batch of cells."""
    freq = _fiber_conv_pair(cells, params["hf_w1"], params["hf_b1"],
                            params["hf_w2"], params["hf_b2"])
    coef = _fiber_conv_pair(cells, params["hc_w1"], params["hc_b1"],
                            params["hc_w2"], params["hc_b2"])
    qv = ad.tensor(q_vec.reshape(1, -1), requires_grad=False, dtype=params.dtype)
    qk = ad.linear(qv, params["hq_w"], params["hq_b"])  # (1, k)
    k = params.config.k
    f_h = ad.narrow(freq, 1, 0, k)
    f_w = ad.narrow(freq, 1, k, k)
    return coef, f_h, f_w, qk


def _cosine_features_t(amps, f_h, f_w, grid, dtype):
    m, k = amps.values.shape
    n = len(grid.delta)
    dcol = _const(grid.delta.reshape(1, n, 1), dtype)
    ch = ad.cos(ad.scale(ad.broadcast_mul(ad.reshape(f_h, (m, 1, k)), dcol), np.pi))
    cw = ad.cos(ad.scale(ad.broadcast_mul(ad.reshape(f_w, (m, 1, k)), dcol), np.pi))
    prod = ad.broadcast_mul(ad.reshape(ch, (m, n, 1, k)), ad.reshape(cw, (m, 1, n, k)))
    return ad.broadcast_mul(prod, ad.reshape(amps, (m, 1, 1, k)))


def _fourier_features_t(coef, f_h, f_w, qk, grid, dtype):
    """Phase-shifted variant: C * [cos(pi(F.delta + q)); sin(pi(F.delta + q))]."""
    m, k = coef.values.shape
    n = len(grid.delta)
    drow = _const(grid.delta.reshape(1, n, 1, 1), dtype)
    dcol = _const(grid.delta.reshape(1, 1, n, 1), dtype)
    fd = ad.add(ad.broadcast_mul(ad.reshape(f_h, (m, 1, 1, k)), drow),
                ad.broadcast_mul(ad.reshape(f_w, (m, 1, 1, k)), dcol))
    phase = ad.scale(ad.add(fd, ad.reshape(qk, (-1, 1, 1, k))), np.pi)
    c = ad.reshape(coef, (m, 1, 1, k))
    return ad.concat([ad.broadcast_mul(c, ad.cos(phase)),
                      ad.broadcast_mul(c, ad.sin(phase))], axis=-1)


def _decode_features_t(features, params):
    """Pointwise MLP over the last axis of `features`."""
    h = features
    for i in range(5):
        if i:
            h = ad.relu(h)
        h = ad.linear(h, params[f"dec{i}_w"], params[f"dec{i}_b"])
    return h


def ccf_evaluate(z_cell, q_pair, grid, params):
    """Continuous cosine estimate for one latent fiber.

    q_pair is the normalized (2, 8, 8) quantization pair. Returns the
    amplitudes, the two frequency vectors, and the features sampled on
    `grid` (all plain arrays).
    """
    z_cell = np.asarray(z_cell, dtype=np.float64).reshape(1, -1)
    cells = ad.tensor(z_cell, requires_grad=False, dtype=params.dtype)
    q_vec = np.asarray(q_pair, dtype=np.float64).reshape(QTABLE_VEC)
    coef, f_h, f_w, qk = _ccf_tensors(cells, q_vec, params)
    amps = ad.broadcast_mul(coef, qk)
    features = cosine_features(amps.values[0], f_h.values[0], f_w.values[0], grid)
    return CcfOutput(amplitudes=amps.values[0].copy(), f_h=f_h.values[0].copy(),
                     f_w=f_w.values[0].copy(), features=features)


def ccf_fourier_variant(z_cell, q_pair, grid, params):
    """Features of the phase-shifted sinusoidal variant, shape (rb, rb, 2k)."""
    z_cell = np.asarray(z_cell, dtype=np.float64).reshape(1, -1)
    cells = ad.tensor(z_cell, requires_grad=False, dtype=params.dtype)
    q_vec = np.asarray(q_pair, dtype=np.float64).reshape(QTABLE_VEC)
    coef, f_h, f_w, qk = _ccf_tensors(cells, q_vec, params)
    out = _fourier_features_t(coef, f_h, f_w, qk, grid, params.dtype)
    return out.values[0].copy()


def decode_pixels(features, params):
    """Map (rb, rb, k)-shaped features to (rb, rb, 3) RGB values."""
    t = ad.tensor(np.asarray(features), requires_grad=False, dtype=params.dtype)
    return _decode_features_t(t, params).values.copy()


def _concat_coordinate_features(cells_t, q_vec, grid, config, dtype):
    """Feature builder when the cosine formulation is ablated away:
    every position gets (z, delta, normalized Q) stacked on the channel axis."""
    m, c = cells_t.values.shape
    n = len(grid.delta)
    ones = _const(np.ones((1, n, n, 1)), dtype)
    ztile = ad.broadcast_mul(ad.reshape(cells_t, (m, 1, 1, c)), ones)
    coords = _const(np.broadcast_to(grid.coords, (1, n, n, 2)), dtype)
    qtile = _const(np.broadcast_to(q_vec.reshape(1, 1, 1, -1), (1, n, n, QTABLE_VEC)), dtype)
    onesm = _const(np.ones((m, 1, 1, 1)), dtype)
    return ad.concat([ztile,
                      ad.broadcast_mul(coords, onesm),
                      ad.broadcast_mul(qtile, onesm)], axis=-1)


def decode_latent(z, q_pair, params, config, r=1):
    """CCF features plus decoder MLP over a latent map, tile-assembled.

    z is a (n, c, hc, wc) Tensor (or array); each cell decodes
    independently into its own (r*cell) x (r*cell) output tile. Returns a
    Tensor of shape (n, hc*r*cell, wc*r*cell, 3).
    """
    if r < 1:
        raise ValueError(f"upsampling ratio must be >= 1, got {r}")
    if not isinstance(z, ad.Tensor):
        z = ad.tensor(np.asarray(z), requires_grad=False, dtype=params.dtype)
    n, c, hc, wc = z.values.shape
    cells = ad.reshape(ad.transpose(z, (0, 2, 3, 1)), (n * hc * wc, c))
    grid = make_block_grid(config.cell, r)
    q_vec = np.asarray(q_pair, dtype=np.float64).reshape(QTABLE_VEC)

    if not config.uses_ccf:
        features = _concat_coordinate_features(cells, q_vec, grid, config, params.dtype)
    elif config.ablation == "fourier":
        coef, f_h, f_w, qk = _ccf_tensors(cells, q_vec, params)
        features = _fourier_features_t(coef, f_h, f_w, qk, grid, params.dtype)
    else:
        coef, f_h, f_w, qk = _ccf_tensors(cells, q_vec, params)
        amps = ad.broadcast_mul(coef, qk)
        features = _cosine_features_t(amps, f_h, f_w, grid, params.dtype)

    rgb = _decode_features_t(features, params)  # (n*hc*wc, rb, rb, 3)
    rb = len(grid.delta)
    tiles = ad.reshape(rgb, (n, hc, wc, rb, rb, 3))
    return ad.reshape(ad.transpose(tiles, (0, 1, 3, 2, 4, 5)),
                      (n, hc * rb, wc * rb, 3))


def forward_batch(spectra_y, spectra_cb, spectra_cr, q_pair, params, config, r=1):
    """Differentiable forward over a batch of same-sized normalized grids.

    spectra_y: (n, ny, nx, 8, 8) normalized luma spectra; chroma grids at
    half extent; q_pair is the normalized quantization pair shared by the
    batch ((2, 8, 8) or flat 128). Returns a Tensor of shape
    (n, r*H, r*W, 3) in the [-0.5, 0.5] output convention, H = ny*8.
    """
    zp = _group_embed_batch(spectra_y, spectra_cb, spectra_cr, params, config)
    z = encode_features(zp, params, config)
    return decode_latent(z, q_pair, params, config, r=r)


def _normalized_grids(spectra):
    bounds = spectral.normalization_bounds()
    y = spectra.coeffs_y.astype(np.float64) * spectra.q_luma / bounds
    cb = spectra.coeffs_cb.astype(np.float64) * spectra.q_chroma / bounds
    cr = spectra.coeffs_cr.astype(np.float64) * spectra.q_chroma / bounds
    return y, cb, cr


def latent_map(spectra, params, config):
    """Encoder output for parsed spectra as a (c, hc, wc) array."""
    if spectra.subsampling != "420":
        raise ValueError("model decoding requires 4:2:0 spectra")
    y, cb, cr = _normalized_grids(spectra)
    q_pair = _normalized_q_vector(spectra.q_luma, spectra.q_chroma)
    zp = group_embed(y, cb, cr, q_pair, params, config)
    return encode_features(zp, params, config).values[0].copy()


def forward(spectra, params, config, r=1):
    """Decode parsed JPEG spectra to an RgbImage of size (r*H, r*W).

    The network consumes only the quantized spectra and the quantization
    tables, never conventionally decoded pixels.
    """
    if spectra.subsampling != "420":
        raise ValueError("model decoding requires 4:2:0 spectra")
    y, cb, cr = _normalized_grids(spectra)
    q_pair = _normalized_q_vector(spectra.q_luma, spectra.q_chroma)
    out = forward_batch(y[None], cb[None], cr[None], q_pair, params, config, r=r)
    pixels = np.clip(np.round((out.values[0] + 0.5) * 256.0), 0, 255).astype(np.uint8)
    return RgbImage(pixels[:r * spectra.height, :r * spectra.width].copy())


SPECTRUM_BINS = 51
SPECTRUM_SCALE = 50.0  # unit frequency maps to the top bin


def export_spectrum_viz(z_cell, q_pair, params):
    """All k (f_h, f_w, amplitude) triples plus a rasterized magnitude grid.

    The raster accumulates |amplitude| at bin (round(|f_h|*50),
    round(|f_w|*50)), clipped to [0, 50] per axis, for plotting by
    external tools.
    """
    out = ccf_evaluate(z_cell, q_pair, make_block_grid(params.config.cell, 1), params)
    triples = [(float(fh), float(fw), float(a))
               for fh, fw, a in zip(out.f_h, out.f_w, out.amplitudes)]
    raster = np.zeros((SPECTRUM_BINS, SPECTRUM_BINS))
    bh = np.clip(np.round(np.abs(out.f_h) * SPECTRUM_SCALE), 0, SPECTRUM_BINS - 1)
    bw = np.clip(np.round(np.abs(out.f_w) * SPECTRUM_SCALE), 0, SPECTRUM_BINS - 1)
    np.add.at(raster, (bh.astype(int), bw.astype(int)), np.abs(out.amplitudes))
    return triples, raster
