"""Spectral-domain JPEG toolkit.

Baseline JPEG codec exposing quantized spectra, the exact DCT/sub-block
math behind it, and a neural decoder that reconstructs images directly
from those spectra via a continuous cosine spectrum estimate.
"""

from .codec import (
    JpegSpectra,
    RgbImage,
    decode_baseline,
    encode_jpeg,
    parse_jpeg,
)
from .model import ModelConfig, ModelParams, forward, make_block_grid
from .trainer import Checkpoint, TrainConfig, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "Checkpoint",
    "JpegSpectra",
    "ModelConfig",
    "ModelParams",
    "RgbImage",
    "TrainConfig",
    "decode_baseline",
    "encode_jpeg",
    "forward",
    "load_checkpoint",
    "make_block_grid",
    "parse_jpeg",
    "save_checkpoint",
    "train",
]
