"""Lossless image file I/O: binary PPM (P6) plus optional PNG via Pillow."""

import numpy as np


def _have_pillow():
    try:
        import PIL.Image  # noqa: F401
        return True
    except ImportError:
        return False


def read_ppm(path):
    """Read a binary (P6) PPM file with 8-bit samples into an HxWx3 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P6"):
        raise ValueError(f"{path}: not a binary PPM (P6) file")

    # Header tokens may be separated by whitespace and '#' comments.
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PPM header")
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace byte after maxval

    width, height, maxval = fields
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 supported, got {maxval}")
    n = width * height * 3
    pixels = data[pos:pos + n]
    if len(pixels) < n:
        raise ValueError(f"{path}: truncated PPM pixel data")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width, 3).copy()


def write_ppm(path, pixels):
    """Write an HxWx3 uint8 array as a binary (P6) PPM file."""
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError(f"expected HxWx3 pixel array, got shape {pixels.shape}")
    h, w = pixels.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_image(path):
    """Read a PPM file, or a PNG/BMP when Pillow is installed."""
    name = str(path).lower()
    if name.endswith(".ppm"):
        return read_ppm(path)
    if name.endswith((".png", ".bmp")):
        if not _have_pillow():
            raise ValueError("PNG/BMP support requires Pillow (install the 'png' extra)")
        import PIL.Image
        with PIL.Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    raise ValueError(f"unsupported image format: {path}")


def write_image(path, pixels):
    """Write a PPM file, or a PNG when Pillow is installed."""
    name = str(path).lower()
    if name.endswith(".ppm"):
        write_ppm(path, pixels)
        return
    if name.endswith(".png"):
        if not _have_pillow():
            raise ValueError("PNG support requires Pillow (install the 'png' extra)")
        import PIL.Image
        PIL.Image.fromarray(np.ascontiguousarray(pixels, dtype=np.uint8)).save(path)
        return
    raise ValueError(f"unsupported image format: {path}")
