"""Baseline JPEG codec: JFIF encoder, bitstream parser, conventional decoder.

The encoder produces sequential-DCT 4:2:0 streams with the standard
reference Huffman tables. The parser entropy-decodes any baseline stream
with 4:2:0 or 4:4:4 sampling back into integer coefficient grids without
touching quantization, so the exact payload of the file is exposed.
"""

from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .spectral import BLOCK, ZIGZAG_ORDER

MAX_PIXELS = 1 << 24  # ~16 Mpixel guard against absurd SOF dimensions
MCU = 16


class JpegError(Exception):
    """Base class for bitstream-level failures."""


class TruncatedStreamError(JpegError):
    """Ran out of bytes before the stream was structurally complete."""


class UnsupportedJpegError(JpegError):
    """Well-formed but out of scope (progressive, arithmetic, exotic sampling)."""


class CorruptStreamError(JpegError):
    """Structurally invalid data (bad marker payload, broken Huffman code)."""


class DimensionError(JpegError):
    """Frame dimensions are zero or implausibly large."""


@dataclass(frozen=True)
class RgbImage:
    """8-bit RGB image; data has shape (height, width, 3)."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 3 or d.shape[2] != 3 or d.dtype != np.uint8:
            raise ValueError(f"RgbImage wants HxWx3 uint8, got {d.shape} {d.dtype}")
        if d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError("image must be at least 1x1")

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]


@dataclass
class JpegSpectra:
    """Parsed JPEG content: quantized coefficient grids plus quantization tables.

    Coefficient grids have shape (blocks_y, blocks_x, 8, 8) in natural
    (de-zigzagged) order with DC prediction already undone. `width` and
    `height` are the displayed image dimensions; the luma grid covers the
    dimensions padded up to the MCU size. For 4:2:0 streams the chroma
    grids are half the luma extent in each direction; for 4:4:4 they match.
    """

    width: int
    height: int
    coeffs_y: np.ndarray
    coeffs_cb: np.ndarray
    coeffs_cr: np.ndarray
    q_luma: np.ndarray
    q_chroma: np.ndarray
    subsampling: str = "420"
    source_bytes: int = 0
    restart_interval: int = field(default=0, repr=False)


# ---------------------------------------------------------------------------
# color transform and resampling

# Full-range BT.601 (the JFIF convention).
_RGB_TO_YCC = np.array([
    [0.299, 0.587, 0.114],
    [-0.168735891647416, -0.331264108352584, 0.5],
    [0.5, -0.418687589158345, -0.081312410841655],
])


def rgb_to_ycbcr(img):
    """Split an RgbImage into midpoint-subtracted Y, Cb, Cr planes.

    All three planes come back in [-128, 127]: luma is shifted down by 128
    and the chroma offsets (+128 in the 8-bit convention) cancel the shift.
    """
    rgb = img.data.astype(np.float64)
    ycc = rgb @ _RGB_TO_YCC.T
    ycc[:, :, 0] -= 128.0
    return ycc[:, :, 0], ycc[:, :, 1], ycc[:, :, 2]


def ycbcr_to_rgb(y, cb, cr):
    """Inverse of rgb_to_ycbcr, clamped to 8-bit samples."""
    yy = np.asarray(y, dtype=np.float64) + 128.0
    cb = np.asarray(cb, dtype=np.float64)
    cr = np.asarray(cr, dtype=np.float64)
    r = yy + 1.402 * cr
    g = yy - 0.344136286201022 * cb - 0.714136286201022 * cr
    b = yy + 1.772 * cb
    rgb = np.stack([r, g, b], axis=-1)
    return RgbImage(np.clip(np.round(rgb), 0, 255).astype(np.uint8))


def chroma_downsample(plane):
    """Nearest-neighbor 2x downsample keeping the top-left of each 2x2."""
    plane = np.asarray(plane)
    if plane.shape[0] % 2 or plane.shape[1] % 2:
        raise ValueError(f"plane dimensions must be even, got {plane.shape}")
    return plane[0::2, 0::2].copy()


def chroma_upsample(plane):
    """Nearest-neighbor 2x upsample replicating each sample into a 2x2."""
    plane = np.asarray(plane)
    return np.repeat(np.repeat(plane, 2, axis=0), 2, axis=1)


def pad_edge_replicate(plane, multiple):
    """Pad a 2D plane (or HxWxC image) to dimension multiples by edge replication."""
    plane = np.asarray(plane)
    h, w = plane.shape[:2]
    ph = (multiple - h % multiple) % multiple
    pw = (multiple - w % multiple) % multiple
    if ph == 0 and pw == 0:
        return plane
    pad = [(0, ph), (0, pw)] + [(0, 0)] * (plane.ndim - 2)
    return np.pad(plane, pad, mode="edge")


def plane_to_blocks(plane):
    """(H, W) -> (H/8, W/8, 8, 8) view-copy; dimensions must be 8-multiples."""
    h, w = plane.shape
    if h % BLOCK or w % BLOCK:
        raise ValueError(f"plane dimensions must be multiples of 8, got {plane.shape}")
    return plane.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK).transpose(0, 2, 1, 3).copy()


def blocks_to_plane(blocks):
    """Inverse of plane_to_blocks."""
    nby, nbx = blocks.shape[:2]
    return blocks.transpose(0, 2, 1, 3).reshape(nby * BLOCK, nbx * BLOCK).copy()


def _dct_all(blocks):
    d = spectral.dct_basis(BLOCK).m
    return np.einsum("ui,...ij,vj->...uv", d, blocks, d)


def _idct_all(blocks):
    d = spectral.dct_basis(BLOCK).m
    return np.einsum("iu,...uv,jv->...ij", d.T, blocks, d.T)


def _quantize_grid(spectra, table):
    coeffs = np.sign(spectra) * np.floor(np.abs(spectra) / table + 0.5)
    if np.any(np.abs(coeffs) > spectral.COEFF_MAX):
        raise ValueError("quantized coefficient exceeds 12-bit signed range")
    return coeffs.astype(np.int32)


def image_to_spectra(img, q):
    """Run the lossy half of the encoder: pad, split, downsample, DCT, quantize."""
    if not 0 <= q <= 100:
        raise ValueError(f"quality factor must be in [0, 100], got {q}")
    q_luma, q_chroma = spectral.quality_to_qtables(q)
    padded = pad_edge_replicate(img.data, MCU)
    y, cb, cr = rgb_to_ycbcr(RgbImage(padded))
    cb = chroma_downsample(cb)
    cr = chroma_downsample(cr)
    coeffs = []
    for plane, table in ((y, q_luma), (cb, q_chroma), (cr, q_chroma)):
        coeffs.append(_quantize_grid(_dct_all(plane_to_blocks(plane)), table))
    return JpegSpectra(
        width=img.width, height=img.height,
        coeffs_y=coeffs[0], coeffs_cb=coeffs[1], coeffs_cr=coeffs[2],
        q_luma=q_luma, q_chroma=q_chroma, subsampling="420",
    )


def decode_baseline(spectra):
    """Conventional JPEG decode: dequantize, inverse DCT, upsample, color convert."""
    planes = []
    for coeffs, table in (
        (spectra.coeffs_y, spectra.q_luma),
        (spectra.coeffs_cb, spectra.q_chroma),
        (spectra.coeffs_cr, spectra.q_chroma),
    ):
        planes.append(blocks_to_plane(_idct_all(coeffs.astype(np.float64) * table)))
    y, cb, cr = planes
    if spectra.subsampling == "420":
        cb = chroma_upsample(cb)
        cr = chroma_upsample(cr)
    img = ycbcr_to_rgb(y, cb, cr)
    return RgbImage(img.data[:spectra.height, :spectra.width].copy())


# ---------------------------------------------------------------------------
# standard Huffman tables (JPEG reference tables for 8-bit precision)

DC_LUMA_BITS = [0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0]
DC_LUMA_VALS = list(range(12))

DC_CHROMA_BITS = [0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0]
DC_CHROMA_VALS = list(range(12))

AC_LUMA_BITS = [0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7D]
AC_LUMA_VALS = [
    0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12,
    0x21, 0x31, 0x41, 0x06, 0x13, 0x51, 0x61, 0x07,
    0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xA1, 0x08,
    0x23, 0x42, 0xB1, 0xC1, 0x15, 0x52, 0xD1, 0xF0,
    0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0A, 0x16,
    0x17, 0x18, 0x19, 0x1A, 0x25, 0x26, 0x27, 0x28,
    0x29, 0x2A, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39,
    0x3A, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49,
    0x4A, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59,
    0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69,
    0x6A, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79,
    0x7A, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89,
    0x8A, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98,
    0x99, 0x9A, 0xA2, 0xA3, 0xA4, 0xA5, 0xA6, 0xA7,
    0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6,
    0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3, 0xC4, 0xC5,
    0xC6, 0xC7, 0xC8, 0xC9, 0xCA, 0xD2, 0xD3, 0xD4,
    0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA, 0xE1, 0xE2,
    0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA,
    0xF1, 0xF2, 0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8,
    0xF9, 0xFA,
]

AC_CHROMA_BITS = [0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 0x77]
AC_CHROMA_VALS = [
    0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21,
    0x31, 0x06, 0x12, 0x41, 0x51, 0x07, 0x61, 0x71,
    0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91,
    0xA1, 0xB1, 0xC1, 0x09, 0x23, 0x33, 0x52, 0xF0,
    0x15, 0x62, 0x72, 0xD1, 0x0A, 0x16, 0x24, 0x34,
    0xE1, 0x25, 0xF1, 0x17, 0x18, 0x19, 0x1A, 0x26,
    0x27, 0x28, 0x29, 0x2A, 0x35, 0x36, 0x37, 0x38,
    0x39, 0x3A, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48,
    0x49, 0x4A, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58,
    0x59, 0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68,
    0x69, 0x6A, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78,
    0x79, 0x7A, 0x82, 0x83, 0x84, 0x85, 0x86, 0x87,
    0x88, 0x89, 0x8A, 0x92, 0x93, 0x94, 0x95, 0x96,
    0x97, 0x98, 0x99, 0x9A, 0xA2, 0xA3, 0xA4, 0xA5,
    0xA6, 0xA7, 0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4,
    0xB5, 0xB6, 0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3,
    0xC4, 0xC5, 0xC6, 0xC7, 0xC8, 0xC9, 0xCA, 0xD2,
    0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA,
    0xE2, 0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9,
    0xEA, 0xF2, 0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8,
    0xF9, 0xFA,
]


def build_huffman_codes(bits, vals):
    """Assign canonical codes: {symbol: (code, length)} from the BITS/VALS lists."""
    codes = {}
    code = 0
    k = 0
    for length in range(1, 17):
        for _ in range(bits[length - 1]):
            codes[vals[k]] = (code, length)
            code += 1
            k += 1
        code <<= 1
    return codes


def build_huffman_decoder(bits, vals):
    """Decode map {(length, code): symbol} for bit-serial Huffman lookup."""
    return {(length, code): sym for sym, (code, length) in build_huffman_codes(bits, vals).items()}


# ---------------------------------------------------------------------------
# entropy-coded segment: bit-level writer / reader with byte stuffing

class BitWriter:
    def __init__(self):
        self.out = bytearray()
        self.acc = 0
        self.nbits = 0

    def write(self, value, length):
        if length == 0:
            return
        self.acc = (self.acc << length) | (value & ((1 << length) - 1))
        self.nbits += length
        while self.nbits >= 8:
            self.nbits -= 8
            byte = (self.acc >> self.nbits) & 0xFF
            self.out.append(byte)
            if byte == 0xFF:
                self.out.append(0x00)
        self.acc &= (1 << self.nbits) - 1

    def flush(self):
        """Pad the final partial byte with 1-bits."""
        if self.nbits:
            pad = 8 - self.nbits
            self.write((1 << pad) - 1, pad)


class BitReader:
    """Bit-serial reader over entropy-coded data.

    Undoes byte stuffing, stops at any non-stuffing marker, and lets the
    scan loop consume restart markers explicitly.
    """

    def __init__(self, data, pos):
        self.data = data
        self.pos = pos
        self.acc = 0
        self.nbits = 0
        self.marker = None  # set when a real marker terminates the segment

    def _fill(self):
        data = self.data
        pos = self.pos
        if pos >= len(data):
            raise TruncatedStreamError("entropy data ended mid-stream")
        byte = data[pos]
        if byte == 0xFF:
            if pos + 1 >= len(data):
                raise TruncatedStreamError("entropy data ended inside a marker")
            nxt = data[pos + 1]
            if nxt == 0x00:
                self.pos = pos + 2
            else:
                self.marker = nxt
                raise _MarkerInScan(nxt)
        else:
            self.pos = pos + 1
        self.acc = (self.acc << 8) | byte
        self.nbits += 8

    def bits(self, n):
        while self.nbits < n:
            self._fill()
        self.nbits -= n
        val = (self.acc >> self.nbits) & ((1 << n) - 1)
        self.acc &= (1 << self.nbits) - 1
        return val

    def align(self):
        self.acc = 0
        self.nbits = 0

    def skip_stuffed_padding(self):
        """Step over FF00 pairs left by 1-bit padding that formed 0xFF."""
        data = self.data
        while self.pos + 1 < len(data) and data[self.pos] == 0xFF and data[self.pos + 1] == 0x00:
            self.pos += 2

    def take_restart(self, expect):
        """Consume an RSTn marker at the current (aligned) position."""
        self.skip_stuffed_padding()
        data, pos = self.data, self.pos
        if pos + 1 >= len(data):
            raise TruncatedStreamError("stream ended where a restart marker was expected")
        if data[pos] != 0xFF or data[pos + 1] != 0xD0 + (expect & 7):
            raise CorruptStreamError(
                f"expected RST{expect & 7} at byte {pos}, found "
                f"{data[pos]:02x}{data[pos + 1]:02x}")
        self.pos = pos + 2


class _MarkerInScan(Exception):
    """Internal: a non-stuffing marker appeared while bits were requested."""

    def __init__(self, marker):
        self.marker = marker


def _decode_symbol(reader, table):
    code = 0
    for length in range(1, 17):
        code = (code << 1) | reader.bits(1)
        sym = table.get((length, code))
        if sym is not None:
            return sym
    raise CorruptStreamError("broken Huffman code in entropy data")


def _extend(value, size):
    # Low `size` bits to signed amplitude, per the JPEG magnitude convention.
    if size == 0:
        return 0
    if value < (1 << (size - 1)):
        return value - (1 << size) + 1
    return value


# ---------------------------------------------------------------------------
# encoder

def _encode_block(writer, zz, pred, dc_codes, ac_codes):
    """Entropy-encode one block given its zigzag coefficient list."""
    diff = zz[0] - pred
    size = abs(diff).bit_length()
    code, length = dc_codes[size]
    writer.write(code, length)
    if size:
        writer.write(diff if diff >= 0 else diff + (1 << size) - 1, size)

    run = 0
    for k in range(1, 64):
        v = zz[k]
        if v == 0:
            run += 1
            continue
        while run > 15:
            code, length = ac_codes[0xF0]  # ZRL
            writer.write(code, length)
            run -= 16
        size = abs(v).bit_length()
        if size > 10:
            raise ValueError("AC coefficient too large for baseline Huffman coding")
        code, length = ac_codes[(run << 4) | size]
        writer.write(code, length)
        writer.write(v if v >= 0 else v + (1 << size) - 1, size)
        run = 0
    if run:
        code, length = ac_codes[0x00]  # EOB
        writer.write(code, length)
    return zz[0]


def _zigzag_lists(coeffs):
    """Coefficient grid -> nested list [by][bx] of zigzag-ordered Python ints."""
    flat = coeffs.reshape(coeffs.shape[0], coeffs.shape[1], 64)[:, :, ZIGZAG_ORDER]
    return flat.tolist()


def _segment(marker, payload):
    return bytes([0xFF, marker]) + (len(payload) + 2).to_bytes(2, "big") + payload


def _dqt_payload(q_luma, q_chroma):
    out = bytearray()
    for tid, table in ((0, q_luma), (1, q_chroma)):
        out.append(tid)
        out.extend(int(v) for v in np.asarray(table).reshape(64)[ZIGZAG_ORDER])
    return bytes(out)


def _dht_payload():
    out = bytearray()
    for tc, th, bits, vals in (
        (0, 0, DC_LUMA_BITS, DC_LUMA_VALS),
        (1, 0, AC_LUMA_BITS, AC_LUMA_VALS),
        (0, 1, DC_CHROMA_BITS, DC_CHROMA_VALS),
        (1, 1, AC_CHROMA_BITS, AC_CHROMA_VALS),
    ):
        out.append((tc << 4) | th)
        out.extend(bits)
        out.extend(vals)
    return bytes(out)


def spectra_to_bytes(spectra, restart_interval=0):
    """Serialize coefficient grids into a complete baseline JFIF stream."""
    s420 = spectra.subsampling == "420"
    ny, nx = spectra.coeffs_y.shape[:2]
    nc_y, nc_x = spectra.coeffs_cb.shape[:2]
    if s420 and (ny != 2 * nc_y or nx != 2 * nc_x):
        raise ValueError("4:2:0 spectra need chroma grids at half the luma extent")
    if not s420 and (ny != nc_y or nx != nc_x):
        raise ValueError("4:4:4 spectra need chroma grids at the luma extent")

    out = bytearray()
    out += bytes([0xFF, 0xD8])  # SOI
    out += _segment(0xE0, b"JFIF\x00\x01\x01\x00\x00\x01\x00\x01\x00\x00")
    out += _segment(0xDB, _dqt_payload(spectra.q_luma, spectra.q_chroma))

    sampling = 0x22 if s420 else 0x11
    sof = bytearray([8])
    sof += int(spectra.height).to_bytes(2, "big")
    sof += int(spectra.width).to_bytes(2, "big")
    sof += bytes([3, 1, sampling, 0, 2, 0x11, 1, 3, 0x11, 1])
    out += _segment(0xC0, bytes(sof))

    out += _segment(0xC4, _dht_payload())
    if restart_interval:
        out += _segment(0xDD, int(restart_interval).to_bytes(2, "big"))
    out += _segment(0xDA, bytes([3, 1, 0x00, 2, 0x11, 3, 0x11, 0, 63, 0]))

    dc_l = build_huffman_codes(DC_LUMA_BITS, DC_LUMA_VALS)
    ac_l = build_huffman_codes(AC_LUMA_BITS, AC_LUMA_VALS)
    dc_c = build_huffman_codes(DC_CHROMA_BITS, DC_CHROMA_VALS)
    ac_c = build_huffman_codes(AC_CHROMA_BITS, AC_CHROMA_VALS)

    zz_y = _zigzag_lists(spectra.coeffs_y)
    zz_cb = _zigzag_lists(spectra.coeffs_cb)
    zz_cr = _zigzag_lists(spectra.coeffs_cr)

    writer = BitWriter()
    preds = [0, 0, 0]
    mcus_y = ny // 2 if s420 else ny
    mcus_x = nx // 2 if s420 else nx
    mcu_index = 0
    rst_count = 0
    for my in range(mcus_y):
        for mx in range(mcus_x):
            if restart_interval and mcu_index and mcu_index % restart_interval == 0:
                writer.flush()
                writer.out += bytes([0xFF, 0xD0 + (rst_count & 7)])
                rst_count += 1
                preds = [0, 0, 0]
            if s420:
                for v in range(2):
                    for h in range(2):
                        preds[0] = _encode_block(
                            writer, zz_y[2 * my + v][2 * mx + h], preds[0], dc_l, ac_l)
            else:
                preds[0] = _encode_block(writer, zz_y[my][mx], preds[0], dc_l, ac_l)
            preds[1] = _encode_block(writer, zz_cb[my][mx], preds[1], dc_c, ac_c)
            preds[2] = _encode_block(writer, zz_cr[my][mx], preds[2], dc_c, ac_c)
            mcu_index += 1
    writer.flush()
    out += writer.out
    out += bytes([0xFF, 0xD9])  # EOI
    return bytes(out)


def encode_jpeg(img, q):
    """Encode an RgbImage as a baseline 4:2:0 JFIF byte stream."""
    return spectra_to_bytes(image_to_spectra(img, q))


# ---------------------------------------------------------------------------
# parser

_SOF_UNSUPPORTED = {
    0xC1: "extended sequential", 0xC2: "progressive", 0xC3: "lossless",
    0xC5: "differential sequential", 0xC6: "differential progressive",
    0xC7: "differential lossless", 0xC9: "arithmetic sequential",
    0xCA: "arithmetic progressive", 0xCB: "arithmetic lossless",
    0xCD: "differential arithmetic sequential",
    0xCE: "differential arithmetic progressive",
    0xCF: "differential arithmetic lossless",
}


class _Parser:
    def __init__(self, data):
        self.data = data
        self.pos = 0
        self.qtables = {}
        self.dc_tables = {}
        self.ac_tables = {}
        self.restart_interval = 0
        self.frame = None
        self.grids = None
        self.saw_eoi = False

    def u8(self):
        if self.pos >= len(self.data):
            raise TruncatedStreamError("unexpected end of stream")
        v = self.data[self.pos]
        self.pos += 1
        return v

    def u16(self):
        if self.pos + 1 >= len(self.data):
            raise TruncatedStreamError("unexpected end of stream")
        v = int.from_bytes(self.data[self.pos:self.pos + 2], "big")
        self.pos += 2
        return v

    def segment_body(self):
        length = self.u16()
        if length < 2:
            raise CorruptStreamError("marker segment length below 2")
        end = self.pos + length - 2
        if end > len(self.data):
            raise TruncatedStreamError("marker segment extends past end of stream")
        body = self.data[self.pos:end]
        self.pos = end
        return body

    def parse(self):
        if self.u8() != 0xFF or self.u8() != 0xD8:
            raise CorruptStreamError("stream does not start with SOI")
        while True:
            byte = self.u8()
            if byte != 0xFF:
                raise CorruptStreamError(f"expected marker, found byte {byte:02x}")
            marker = self.u8()
            while marker == 0xFF:  # fill bytes
                marker = self.u8()
            if marker == 0xD9:  # EOI
                self.saw_eoi = True
                break
            self.dispatch(marker)
        if self.grids is None:
            raise CorruptStreamError("stream contains no image scan")
        return self.result()

    def dispatch(self, marker):
        if marker == 0xC0:
            self.read_sof(self.segment_body())
        elif marker in _SOF_UNSUPPORTED:
            raise UnsupportedJpegError(f"unsupported: {_SOF_UNSUPPORTED[marker]} coding")
        elif marker == 0xC4:
            self.read_dht(self.segment_body())
        elif marker == 0xCC:
            raise UnsupportedJpegError("unsupported: arithmetic conditioning (DAC)")
        elif marker == 0xDB:
            self.read_dqt(self.segment_body())
        elif marker == 0xDD:
            body = self.segment_body()
            if len(body) != 2:
                raise CorruptStreamError("DRI payload must be 2 bytes")
            self.restart_interval = int.from_bytes(body, "big")
        elif marker == 0xDA:
            self.read_scan(self.segment_body())
        elif 0xE0 <= marker <= 0xEF or marker == 0xFE:  # APPn / COM
            self.segment_body()
        elif 0xD0 <= marker <= 0xD7:
            raise CorruptStreamError("restart marker outside an entropy-coded segment")
        else:
            raise UnsupportedJpegError(f"unsupported marker 0xff{marker:02x}")

    def read_dqt(self, body):
        pos = 0
        while pos < len(body):
            pq, tq = body[pos] >> 4, body[pos] & 0x0F
            pos += 1
            if pq != 0:
                raise UnsupportedJpegError("unsupported: 16-bit quantization table")
            if pos + 64 > len(body):
                raise CorruptStreamError("DQT table truncated")
            table = np.empty(64, dtype=np.int64)
            table[ZIGZAG_ORDER] = np.frombuffer(body[pos:pos + 64], dtype=np.uint8)
            self.qtables[tq] = table.reshape(8, 8)
            pos += 64

    def read_dht(self, body):
        pos = 0
        while pos < len(body):
            tc, th = body[pos] >> 4, body[pos] & 0x0F
            pos += 1
            if pos + 16 > len(body):
                raise CorruptStreamError("DHT counts truncated")
            bits = list(body[pos:pos + 16])
            pos += 16
            n = sum(bits)
            if pos + n > len(body):
                raise CorruptStreamError("DHT values truncated")
            vals = list(body[pos:pos + n])
            pos += n
            table = build_huffman_decoder(bits, vals)
            if tc == 0:
                self.dc_tables[th] = table
            elif tc == 1:
                self.ac_tables[th] = table
            else:
                raise CorruptStreamError(f"bad Huffman table class {tc}")

    def read_sof(self, body):
        if len(body) < 6:
            raise CorruptStreamError("SOF0 payload truncated")
        precision = body[0]
        if precision != 8:
            raise UnsupportedJpegError(f"unsupported: {precision}-bit precision")
        height = int.from_bytes(body[1:3], "big")
        width = int.from_bytes(body[3:5], "big")
        ncomp = body[5]
        if width < 1 or height < 1:
            raise DimensionError("frame dimensions must be nonzero")
        if width * height > MAX_PIXELS:
            raise DimensionError(f"frame dimensions {width}x{height} exceed the pixel cap")
        if ncomp != 3:
            raise UnsupportedJpegError(f"unsupported: {ncomp}-component frame")
        if len(body) < 6 + 3 * ncomp:
            raise CorruptStreamError("SOF0 component list truncated")
        comps = []
        for i in range(ncomp):
            cid, hv, tq = body[6 + 3 * i:9 + 3 * i]
            comps.append((cid, hv >> 4, hv & 0x0F, tq))
        samplings = tuple((h, v) for _, h, v, _ in comps)
        if samplings == ((2, 2), (1, 1), (1, 1)):
            subsampling = "420"
        elif samplings == ((1, 1), (1, 1), (1, 1)):
            subsampling = "444"
        else:
            raise UnsupportedJpegError(f"unsupported sampling factors {samplings}")
        self.frame = {"width": width, "height": height,
                      "comps": comps, "subsampling": subsampling}

    def read_scan(self, body):
        if self.frame is None:
            raise CorruptStreamError("SOS before SOF0")
        ns = body[0]
        if ns != 3 or len(body) != 1 + 2 * ns + 3:
            raise CorruptStreamError("unexpected SOS component layout")
        selectors = {}
        for i in range(ns):
            cs, tda = body[1 + 2 * i], body[2 + 2 * i]
            selectors[cs] = (tda >> 4, tda & 0x0F)
        ss, se, ahal = body[1 + 2 * ns:]
        if (ss, se, ahal) != (0, 63, 0):
            raise UnsupportedJpegError("unsupported: non-baseline spectral selection")

        s420 = self.frame["subsampling"] == "420"
        width, height = self.frame["width"], self.frame["height"]
        unit = MCU if s420 else BLOCK
        mcus_x = -(-width // unit)
        mcus_y = -(-height // unit)
        grids = []
        comp_tables = []
        for cid, h, v, tq in self.frame["comps"]:
            if cid not in selectors:
                raise CorruptStreamError(f"scan does not cover component {cid}")
            td, ta = selectors[cid]
            if td not in self.dc_tables or ta not in self.ac_tables:
                raise CorruptStreamError("scan references an undefined Huffman table")
            if tq not in self.qtables:
                raise CorruptStreamError("frame references an undefined quantization table")
            nby = mcus_y * v if s420 else mcus_y
            nbx = mcus_x * h if s420 else mcus_x
            grids.append(np.zeros((nby, nbx, 64), dtype=np.int32))
            comp_tables.append((self.dc_tables[td], self.ac_tables[ta], h, v))

        reader = BitReader(self.data, self.pos)
        preds = [0, 0, 0]
        rst_count = 0
        total_mcus = mcus_y * mcus_x
        try:
            for mcu_index in range(total_mcus):
                if self.restart_interval and mcu_index and \
                        mcu_index % self.restart_interval == 0:
                    reader.align()
                    reader.take_restart(rst_count)
                    rst_count = (rst_count + 1) & 7
                    preds = [0, 0, 0]
                my, mx = divmod(mcu_index, mcus_x)
                for ci, (dc_tab, ac_tab, h, v) in enumerate(comp_tables):
                    for bv in range(v):
                        for bh in range(h):
                            zz = self.decode_block(reader, dc_tab, ac_tab, preds, ci)
                            grids[ci][my * v + bv, mx * h + bh] = zz
        except _MarkerInScan as exc:
            if exc.marker == 0xD9:
                raise TruncatedStreamError("EOI arrived before the scan was complete")
            raise CorruptStreamError(
                f"marker 0xff{exc.marker:02x} interrupted the entropy-coded segment")

        reader.skip_stuffed_padding()
        self.pos = reader.pos
        natural = [np.empty_like(g) for g in grids]
        for g, nat in zip(grids, natural):
            nat[:, :, ZIGZAG_ORDER] = g
        self.grids = [nat.reshape(nat.shape[0], nat.shape[1], 8, 8) for nat in natural]

    def decode_block(self, reader, dc_tab, ac_tab, preds, ci):
        zz = np.zeros(64, dtype=np.int32)
        size = _decode_symbol(reader, dc_tab)
        if size > 11:
            raise CorruptStreamError("DC magnitude category exceeds 11")
        diff = _extend(reader.bits(size), size)
        preds[ci] += diff
        if abs(preds[ci]) > spectral.COEFF_MAX:
            raise CorruptStreamError("decoded DC coefficient outside 12-bit range")
        zz[0] = preds[ci]
        k = 1
        while k < 64:
            rs = _decode_symbol(reader, ac_tab)
            run, size = rs >> 4, rs & 0x0F
            if size == 0:
                if run == 0:  # EOB
                    break
                if run == 15:  # ZRL
                    k += 16
                    continue
                raise CorruptStreamError(f"invalid AC run/size symbol {rs:02x}")
            k += run
            if k > 63:
                raise CorruptStreamError("AC run overflows the block")
            zz[k] = _extend(reader.bits(size), size)
            k += 1
        return zz

    def result(self):
        q_ids = [tq for _, _, _, tq in self.frame["comps"]]
        return JpegSpectra(
            width=self.frame["width"], height=self.frame["height"],
            coeffs_y=self.grids[0], coeffs_cb=self.grids[1], coeffs_cr=self.grids[2],
            q_luma=self.qtables[q_ids[0]], q_chroma=self.qtables[q_ids[1]],
            subsampling=self.frame["subsampling"], source_bytes=len(self.data),
            restart_interval=self.restart_interval,
        )


def parse_jpeg(data):
    """Entropy-decode a baseline JFIF stream into its quantized coefficients."""
    if len(data) < 4:
        raise TruncatedStreamError("stream too short for SOI/EOI markers")
    return _Parser(bytes(data)).parse()
