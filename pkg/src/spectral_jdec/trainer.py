"""Training pipeline: patch/compress data pairs, the optimization loop,
parameter initialization and versioned checkpoints."""

import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from . import codec, model, spectral

DEFAULT_Q_SET = tuple(range(10, 101, 10))
JDEC_PLUS_Q_SET = tuple(range(0, 101, 10))


@dataclass(frozen=True)
class TrainConfig:
    patch: int = 112
    batch: int = 16
    epochs: int = 10
    lr: float = 1e-4
    decay_epochs: tuple = (200, 400, 600, 800)
    decay_factor: float = 0.5
    q_set: tuple = DEFAULT_Q_SET
    seed: int = 0

    def __post_init__(self):
        if self.patch % codec.MCU:
            raise ValueError(f"patch size must be a multiple of 16, got {self.patch}")
        if not self.q_set or any(q < 0 or q > 100 for q in self.q_set):
            raise ValueError("quality set must be nonempty within [0, 100]")
        if self.batch < 1 or self.epochs < 0:
            raise ValueError("batch must be >= 1 and epochs >= 0")

    def lr_at_epoch(self, epoch):
        """Learning rate for a 1-based epoch index under the step decay."""
        halvings = sum(1 for d in self.decay_epochs if d < epoch)
        return self.lr * self.decay_factor**halvings


def weight_init(model_config, rng, dtype=np.float32):
    """Fan-in-scaled uniform weights, zero biases.

    The final frequency-estimator layer is shrunk by 10x so the learned
    cosine frequencies start near zero, where the features are smooth.
    """
    arrays = {}
    for name, shape in model.param_shapes(model_config).items():
        if name.endswith("_b") or name.endswith("b1") or name.endswith("b2"):
            values = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[1:]))
            bound = np.sqrt(6.0 / fan_in)
            values = rng.uniform(-bound, bound, shape).astype(dtype)
            if name == "hf_w2":
                values *= 0.1
        arrays[name] = ad.tensor(values, requires_grad=True, dtype=dtype)
    return model.ModelParams(config=model_config, arrays=arrays)


def _aligned_offset(rng, extent, patch):
    slots = (extent - patch) // codec.MCU
    return int(rng.integers(0, slots + 1)) * codec.MCU


def make_training_pair(img, q, rng, patch=112):
    """Crop a random 16-aligned patch, push it through the codec at quality q.

    Returns ((y, cb, cr, q_pair), target): normalized spectra grids, the
    normalized quantization pair, and the ground-truth patch mapped to
    [-0.5, 0.5].
    """
    if img.height < patch or img.width < patch:
        raise ValueError(
            f"image {img.width}x{img.height} smaller than the {patch} patch")
    oy = _aligned_offset(rng, img.height, patch)
    ox = _aligned_offset(rng, img.width, patch)
    crop = codec.RgbImage(img.data[oy:oy + patch, ox:ox + patch].copy())
    spectra = codec.parse_jpeg(codec.encode_jpeg(crop, q))

    bounds = spectral.normalization_bounds()
    y = spectra.coeffs_y.astype(np.float64) * spectra.q_luma / bounds
    cb = spectra.coeffs_cb.astype(np.float64) * spectra.q_chroma / bounds
    cr = spectra.coeffs_cr.astype(np.float64) * spectra.q_chroma / bounds
    q_pair = np.stack([spectra.q_luma / bounds, spectra.q_chroma / bounds])
    # midpoint-anchored [-0.5, 0.5) convention: the sample value 128 maps to 0
    target = (crop.data.astype(np.float64) - 128.0) / 256.0
    return (y, cb, cr, q_pair), target


@dataclass
class Checkpoint:
    """Serializable training snapshot (format version, weights, Adam state)."""

    config: model.ModelConfig
    arrays: dict
    step: int = 0
    optimizer: dict | None = None
    version: int = 1

    def to_params(self, dtype=np.float32):
        arrays = {name: ad.tensor(values.astype(dtype), requires_grad=True, dtype=dtype)
                  for name, values in self.arrays.items()}
        return model.ModelParams(config=self.config, arrays=arrays)

    @classmethod
    def from_params(cls, params, step=0, optimizer=None):
        arrays = {name: t.values.astype(np.float32).copy()
                  for name, t in params.arrays.items()}
        return cls(config=params.config, arrays=arrays, step=step, optimizer=optimizer)


class CheckpointError(Exception):
    pass


class CheckpointFormatError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


CKPT_MAGIC = b"SJDC"
CKPT_VERSION = 1


def save_checkpoint(ckpt, path):
    """Write magic, version, a JSON manifest, then raw little-endian arrays."""
    manifest = {
        "config": asdict(ckpt.config),
        "step": int(ckpt.step),
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in ckpt.arrays.items()],
        "optimizer": None,
    }
    blobs = [np.ascontiguousarray(a, dtype="<f4") for a in ckpt.arrays.values()]
    if ckpt.optimizer is not None:
        manifest["optimizer"] = {
            "lr": ckpt.optimizer["lr"], "beta1": ckpt.optimizer["beta1"],
            "beta2": ckpt.optimizer["beta2"], "eps": ckpt.optimizer["eps"],
            "step": ckpt.optimizer["step"],
        }
        for key in ("m", "v"):
            blobs.extend(np.ascontiguousarray(a, dtype="<f4")
                         for a in ckpt.optimizer[key])
    header = json.dumps(manifest).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<HI", ckpt.version, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob.tobytes())


def load_checkpoint(path, expected_config=None):
    """Read a checkpoint; optionally insist it matches a ModelConfig."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 10 or data[:4] != CKPT_MAGIC:
        raise CheckpointFormatError(f"{path}: not a checkpoint file")
    version, header_len = struct.unpack("<HI", data[4:10])
    if version != CKPT_VERSION:
        raise CheckpointVersionError(f"{path}: format version {version}, expected {CKPT_VERSION}")
    if len(data) < 10 + header_len:
        raise CheckpointTruncatedError(f"{path}: manifest truncated")
    try:
        manifest = json.loads(data[10:10 + header_len])
    except json.JSONDecodeError as exc:
        raise CheckpointFormatError(f"{path}: bad manifest: {exc}")

    config = model.ModelConfig(**manifest["config"])
    shapes = model.param_shapes(config)
    names = [entry["name"] for entry in manifest["arrays"]]
    if names != list(shapes):
        raise CheckpointShapeError(f"{path}: array list does not match the architecture")
    for entry in manifest["arrays"]:
        if tuple(entry["shape"]) != shapes[entry["name"]]:
            raise CheckpointShapeError(
                f"{path}: {entry['name']} has shape {entry['shape']}, "
                f"expected {list(shapes[entry['name']])}")
    if expected_config is not None and config != expected_config:
        raise CheckpointShapeError(
            f"{path}: checkpoint built for {config}, expected {expected_config}")

    pos = 10 + header_len
    arrays = {}

    def take(shape):
        nonlocal pos
        n = int(np.prod(shape)) * 4
        if pos + n > len(data):
            raise CheckpointTruncatedError(f"{path}: array data truncated")
        out = np.frombuffer(data[pos:pos + n], dtype="<f4").reshape(shape).copy()
        pos += n
        return out

    for entry in manifest["arrays"]:
        arrays[entry["name"]] = take(entry["shape"])

    optimizer = None
    if manifest["optimizer"] is not None:
        optimizer = dict(manifest["optimizer"])
        optimizer["m"] = [take(shapes[n]) for n in names]
        optimizer["v"] = [take(shapes[n]) for n in names]
    if pos != len(data):
        raise CheckpointFormatError(f"{path}: {len(data) - pos} trailing bytes")
    return Checkpoint(config=config, arrays=arrays, step=manifest["step"],
                      optimizer=optimizer, version=version)


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list = field(default_factory=list)  # rows: (step, epoch, lr, loss)


def train(config, dataset, model_config, params=None, save_optimizer=False,
          log=None):
    """Optimize the model on a list of RgbImages.

    Per batch: one quality factor is drawn for the whole batch, patch pairs
    are built through the codec, and an L1 step is taken. The learning
    rate halves at the configured epochs. Raises on a NaN loss with the
    step, learning rate and seed in the message.
    """
    if not dataset:
        raise ValueError("training requires a nonempty dataset")
    rng = np.random.default_rng(config.seed)
    if params is None:
        params = weight_init(model_config, rng)
    tensors = params.tensors()
    state = ad.AdamState(lr=config.lr)
    history = []
    step = 0
    q_set = list(config.q_set)

    for epoch in range(1, config.epochs + 1):
        lr = config.lr_at_epoch(epoch)
        state.lr = lr
        order = rng.permutation(len(dataset))
        for start in range(0, len(order), config.batch):
            batch_ids = order[start:start + config.batch]
            q = q_set[int(rng.integers(0, len(q_set)))]
            ys, cbs, crs, targets = [], [], [], []
            q_pair = None
            for i in batch_ids:
                (y, cb, cr, qp), target = make_training_pair(
                    dataset[i], q, rng, patch=config.patch)
                ys.append(y)
                cbs.append(cb)
                crs.append(cr)
                targets.append(target)
                q_pair = qp
            out = model.forward_batch(
                np.stack(ys), np.stack(cbs), np.stack(crs), q_pair,
                params, model_config)
            loss = ad.l1_loss(out, ad.tensor(np.stack(targets), dtype=params.dtype))
            loss_val = float(loss.values)
            if not np.isfinite(loss_val):
                raise RuntimeError(
                    f"non-finite loss at step {step} (epoch {epoch}, lr {lr:g}, "
                    f"seed {config.seed}, q {q})")
            ad.zero_grads(tensors)
            ad.backward(loss)
            ad.adam_step(tensors, [t.grad for t in tensors], state)
            step += 1
            history.append((step, epoch, lr, loss_val))
            if log:
                log(step, epoch, lr, loss_val)

    optimizer = None
    if save_optimizer:
        optimizer = {"lr": state.lr, "beta1": state.beta1, "beta2": state.beta2,
                     "eps": state.eps, "step": state.step,
                     "m": state.m, "v": state.v}
    ckpt = Checkpoint.from_params(params, step=step, optimizer=optimizer)
    return TrainResult(checkpoint=ckpt, history=history)


def write_history_csv(history, path):
    with open(path, "w") as fh:
        fh.write("step,epoch,lr,loss\n")
        for step, epoch, lr, loss in history:
            fh.write(f"{step},{epoch},{lr:.10g},{loss:.10g}\n")
