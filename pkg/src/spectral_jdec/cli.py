"""Command-line surface: encode, inspect, decode, train, eval, spectrum.

Exit codes: 0 success, 1 I/O or stream/model runtime failure, 2 usage
errors, 3 checkpoint/config mismatch. Human-readable text goes to stdout;
machine output goes to -o paths (inspect --json without -o being the one
stdout exception, since JSON is the requested display there).
"""

import argparse
import json
import os
import pathlib
import sys

import numpy as np

from . import codec, metrics, model, spectral, trainer
from .imageio import read_image, write_image
from .synthetic import generate_images

ABLATION_IDS = {"id1": "no_ccf", "id2": "no_subblock", "id3": "neither", "id4": "fourier"}

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_CKPT = 3


class UsageError(Exception):
    pass


def thread_cap():
    """Parallelism cap from SPECTRAL_JDEC_THREADS (0 = auto)."""
    raw = os.environ.get("SPECTRAL_JDEC_THREADS", "0")
    try:
        cap = int(raw)
    except ValueError:
        raise UsageError(f"SPECTRAL_JDEC_THREADS must be an integer, got {raw!r}")
    if cap < 0:
        raise UsageError("SPECTRAL_JDEC_THREADS must be >= 0")
    return cap


def _load_config_file(path):
    """key=value overlay; blank lines and # comments are ignored."""
    overlay = {}
    try:
        text = pathlib.Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}")
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        overlay[key] = value
    return overlay


_INT_KEYS = {"patch", "batch", "epochs", "seed", "b", "c", "k", "n_res_blocks",
             "synthetic_size"}
_FLOAT_KEYS = {"lr", "decay_factor"}
_LIST_KEYS = {"decay_epochs", "q_set"}


def _parse_overlay(overlay):
    parsed = {}
    for key, value in overlay.items():
        if key in _INT_KEYS:
            parsed[key] = int(value)
        elif key in _FLOAT_KEYS:
            parsed[key] = float(value)
        elif key in _LIST_KEYS:
            parsed[key] = tuple(int(v) for v in value.split(",") if v.strip())
        else:
            raise UsageError(f"unknown config key {key!r}")
    return parsed


def _load_images_dir(path):
    root = pathlib.Path(path)
    if not root.is_dir():
        raise UsageError(f"data directory not found: {path}")
    files = sorted(p for p in root.iterdir()
                   if p.suffix.lower() in (".ppm", ".png"))
    if not files:
        raise UsageError(f"no .ppm/.png images in {path}")
    return [codec.RgbImage(read_image(p)) for p in files]


def _load_checkpoint(path, expected_config=None):
    if not pathlib.Path(path).exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    ckpt = trainer.load_checkpoint(path, expected_config=expected_config)
    return ckpt.to_params(), ckpt.config


# ---------------------------------------------------------------------------
# subcommands

def cmd_encode(args):
    if not 0 <= args.quality <= 100:
        raise UsageError(f"--quality must be in [0, 100], got {args.quality}")
    img = codec.RgbImage(read_image(args.input))
    data = codec.encode_jpeg(img, args.quality)
    with open(args.output, "wb") as fh:
        fh.write(data)
    print(f"wrote {args.output}: {len(data)} bytes, "
          f"bpp {metrics.bpp(len(data), img.width, img.height):.4f}")
    return EXIT_OK


def cmd_inspect(args):
    data = pathlib.Path(args.input).read_bytes()
    spectra = codec.parse_jpeg(data)
    block = None
    if args.block is not None:
        by, bx = args.block
        ny, nx = spectra.coeffs_y.shape[:2]
        if not (0 <= by < ny and 0 <= bx < nx):
            raise UsageError(f"--block {by} {bx} outside the {ny}x{nx} luma grid")
        block = spectra.coeffs_y[by, bx]
    if args.json:
        payload = {
            "width": spectra.width, "height": spectra.height,
            "subsampling": spectra.subsampling,
            "source_bytes": spectra.source_bytes,
            "restart_interval": spectra.restart_interval,
            "q_luma": spectra.q_luma.tolist(),
            "q_chroma": spectra.q_chroma.tolist(),
        }
        if block is not None:
            payload["block"] = block.tolist()
        text = json.dumps(payload, indent=2)
        if args.output:
            pathlib.Path(args.output).write_text(text + "\n")
        else:
            print(text)
        return EXIT_OK
    print(f"{spectra.width}x{spectra.height}, {spectra.subsampling}, "
          f"{spectra.source_bytes} bytes")
    print("luma quantization table:")
    print(np.array2string(spectra.q_luma))
    print("chroma quantization table:")
    print(np.array2string(spectra.q_chroma))
    if block is not None:
        print(f"luma block ({args.block[0]}, {args.block[1]}) coefficients:")
        print(np.array2string(block))
    return EXIT_OK


def cmd_decode(args):
    if args.scale < 1:
        raise UsageError(f"--scale must be >= 1, got {args.scale}")
    if args.scale > 1 and not args.model:
        raise UsageError("--scale above 1 requires --model")
    data = pathlib.Path(args.input).read_bytes()
    spectra = codec.parse_jpeg(data)
    if args.model:
        params, config = _load_checkpoint(args.model)
        img = model.forward(spectra, params, config, r=args.scale)
    else:
        img = codec.decode_baseline(spectra)
    write_image(args.output, img.data)
    print(f"wrote {args.output}: {img.width}x{img.height}")
    return EXIT_OK


def _train_configs(args):
    overlay = _parse_overlay(_load_config_file(args.config)) if args.config else {}
    if args.seed is not None:
        overlay["seed"] = args.seed
    model_keys = {k: overlay.pop(k) for k in ("b", "c", "k", "n_res_blocks")
                  if k in overlay}
    synthetic_size = overlay.pop("synthetic_size", 64)
    if args.jdec_plus:
        overlay["q_set"] = trainer.JDEC_PLUS_Q_SET
    if args.ablation:
        model_keys["ablation"] = ABLATION_IDS[args.ablation]
    try:
        train_cfg = trainer.TrainConfig(**overlay)
        model_cfg = model.ModelConfig(**model_keys)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc))
    return train_cfg, model_cfg, synthetic_size


def cmd_train(args):
    if (args.data is None) == (args.synthetic is None):
        raise UsageError("pass exactly one of --data or --synthetic")
    train_cfg, model_cfg, synthetic_size = _train_configs(args)
    if args.synthetic is not None:
        if args.synthetic < 1:
            raise UsageError("--synthetic needs a positive image count")
        dataset = generate_images(args.synthetic, synthetic_size, seed=train_cfg.seed)
    else:
        dataset = _load_images_dir(args.data)
    print(f"seed: {train_cfg.seed}")
    print(f"training on {len(dataset)} images, q_set {list(train_cfg.q_set)}, "
          f"ablation {model_cfg.ablation}")
    result = trainer.train(train_cfg, dataset, model_cfg)
    trainer.save_checkpoint(result.checkpoint, args.output)
    loss_csv = args.loss_csv or str(args.output) + ".loss.csv"
    trainer.write_history_csv(result.history, loss_csv)
    final = result.history[-1][3] if result.history else float("nan")
    print(f"wrote {args.output} ({result.checkpoint.step} steps, "
          f"final loss {final:.5f}) and {loss_csv}")
    return EXIT_OK


def cmd_eval(args):
    try:
        q_list = [int(v) for v in args.q.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--q must be a comma-separated integer list, got {args.q!r}")
    if not q_list or any(not 0 <= q <= 100 for q in q_list):
        raise UsageError("--q values must lie in [0, 100]")
    images = _load_images_dir(args.data)
    if args.model:
        params, config = _load_checkpoint(args.model)
        decoder = lambda spectra: model.forward(spectra, params, config)
        method = "jdec"
    else:
        decoder, method = None, "baseline"

    failures = []

    def on_skip(q, idx, exc):
        failures.append((q, idx, exc))
        print(f"skipped image {idx} at q={q}: {exc}", file=sys.stderr)

    records = metrics.rd_sweep(images, q_list, decoder=decoder, method=method,
                               on_skip=on_skip)
    if not records:
        print("all images failed", file=sys.stderr)
        return EXIT_RUNTIME
    if str(args.output).endswith(".json"):
        metrics.write_rd_json(records, args.output)
    else:
        metrics.write_rd_csv(records, args.output)
    print(f"wrote {args.output}: {len(records)} rate-distortion records "
          f"({len(failures)} skips)")
    return EXIT_OK


def cmd_spectrum(args):
    params, config = _load_checkpoint(args.model)
    data = pathlib.Path(args.input).read_bytes()
    spectra = codec.parse_jpeg(data)
    z = model.latent_map(spectra, params, config)
    cy, cx = args.block
    if not (0 <= cy < z.shape[1] and 0 <= cx < z.shape[2]):
        raise UsageError(
            f"--block {cy} {cx} outside the {z.shape[1]}x{z.shape[2]} latent grid")
    bounds = spectral.normalization_bounds()
    q_pair = np.stack([spectra.q_luma / bounds, spectra.q_chroma / bounds])
    triples, raster = model.export_spectrum_viz(z[:, cy, cx], q_pair, params)
    payload = {"block": [cy, cx],
               "triples": [[fh, fw, a] for fh, fw, a in triples],
               "raster": raster.tolist()}
    pathlib.Path(args.output).write_text(json.dumps(payload) + "\n")
    print(f"wrote {args.output}: {len(triples)} spectrum components")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="spectral-jdec",
        description="Spectral-domain JPEG toolkit: codec, metrics and neural decoding.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="compress an image to baseline JFIF")
    p.add_argument("input")
    p.add_argument("--quality", type=int, default=50)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("inspect", help="show dimensions, tables and coefficients")
    p.add_argument("input")
    p.add_argument("--block", nargs=2, type=int, metavar=("Y", "X"))
    p.add_argument("--json", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("decode", help="decode a JPEG conventionally or with a model")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--model")
    p.add_argument("--scale", type=int, default=1)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("train", help="train the neural decoder")
    p.add_argument("--data")
    p.add_argument("--synthetic", type=int)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--ablation", choices=sorted(ABLATION_IDS))
    p.add_argument("--jdec-plus", action="store_true",
                   help="extend the training quality range down to 0")
    p.add_argument("--loss-csv")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="rate-distortion sweep over a directory")
    p.add_argument("--data", required=True)
    p.add_argument("--q", required=True, help="comma-separated quality factors")
    p.add_argument("--model")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("spectrum", help="export a cell's estimated spectrum")
    p.add_argument("input")
    p.add_argument("--model", required=True)
    p.add_argument("--block", nargs=2, type=int, default=[0, 0], metavar=("Y", "X"))
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_spectrum)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        thread_cap()
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (trainer.CheckpointShapeError, trainer.CheckpointVersionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CKPT
    except (codec.JpegError, trainer.CheckpointError, RuntimeError,
            OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
