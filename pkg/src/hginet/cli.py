"""Command-line front end.

Verbs: synth, train, infer, eval, golden. Exit codes: 0 success, 1 usage,
2 data error, 3 numeric failure. HGI_THREADS caps --jobs. Inference and
evaluation fan out over images with filename-ordered, deterministic output.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import config as config_mod
from . import tensor as T
from .data import SynthSpec, load_dataset, make_pair, synth_generate
from .errors import DataError, NumericError
from .metrics import binarize_mask, evaluate_pair, report_csv
from .model import Model, build, checkpoint_load, checkpoint_save
from .pnm import read_pixmap, write_pgm, write_ppm
from .tensor import Tensor
from .train import TrainSettings, train

logger = logging.getLogger(__name__)

GOLDEN_TRAIN_PAIRS = 16
GOLDEN_TRAIN_STEPS = 8
GOLDEN_IMAGE_SEED = 123
GOLDEN_IMAGES = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); we map usage to 1
        raise UsageError(message)


def _non_negative(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return value


def build_parser() -> _Parser:
    parser = _Parser(prog="hginet", description="camouflaged-object detection toolkit")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic camouflage dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--seed", type=_non_negative, default=0)
    p.add_argument("--count", type=int, default=80, help="number of image/mask pairs")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--contrast", type=float, default=0.1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train on a generated dataset")
    p.add_argument("--data", required=True, help="dataset directory (images/ + masks/)")
    p.add_argument("--out", required=True, help="run directory for logs and checkpoints")
    p.add_argument("--config", default=None, help="model config file (default: desk profile)")
    p.add_argument("--seed", type=_non_negative, default=None, help="override the config seed")
    p.add_argument("--epochs", type=int, default=300, help="passes over the training split")
    p.add_argument("--batch", type=int, default=4)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="write prediction maps for images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="image directory (flat or dataset root)")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="config file (default: next to checkpoint)")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score prediction maps against ground truth")
    p.add_argument("pred", help="directory of prediction maps (.pgm)")
    p.add_argument("--data", required=True, help="ground-truth directory (flat or dataset root)")
    p.add_argument("--out", default=None, help="directory for metrics.csv (default: stdout)")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("golden", help="regenerate or verify the golden files")
    p.add_argument("mode", choices=("regenerate", "verify"))
    p.add_argument("--out", default="goldens", help="golden directory")
    p.set_defaults(func=cmd_golden)
    return parser


def resolve_jobs(requested: int) -> int:
    jobs = max(1, requested)
    cap = os.environ.get("HGI_THREADS")
    if cap:
        try:
            jobs = min(jobs, max(1, int(cap)))
        except ValueError:
            raise UsageError(f"HGI_THREADS must be an integer, got {cap!r}") from None
    return jobs


def _load_config(path, seed=None) -> config_mod.ModelConfig:
    cfg = config_mod.load(path) if path else config_mod.desk_profile()
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed).validate()
    return cfg


def cmd_synth(args) -> int:
    spec = SynthSpec(size=args.size, contrast=args.contrast, seed=args.seed).validate()
    stems = synth_generate(spec, args.count, args.out)
    print(f"wrote {len(stems)} pairs under {args.out}")
    return 0


def _split_pairs(pairs):
    n_val = max(1, len(pairs) // 5)
    if len(pairs) <= n_val:
        raise DataError(f"dataset of {len(pairs)} pairs is too small to hold out {n_val}")
    samples = [pair for _, pair in pairs]
    return samples[:-n_val], samples[-n_val:]


def cmd_train(args) -> int:
    cfg = _load_config(args.config, args.seed)
    train_pairs, val_pairs = _split_pairs(load_dataset(args.data))
    for pair in train_pairs + val_pairs:
        if pair.image.shape[1] != cfg.input_size:
            raise DataError(
                f"dataset extent {pair.image.shape[1]} does not match config input {cfg.input_size}"
            )
    os.makedirs(args.out, exist_ok=True)
    config_mod.save(cfg, os.path.join(args.out, "model.cfg"))
    model = build(cfg)
    steps = args.epochs * max(1, len(train_pairs) // args.batch)
    result = train(
        model,
        train_pairs,
        val_pairs,
        TrainSettings(steps=steps, batch_size=args.batch),
        out_dir=args.out,
    )
    print(
        f"trained {args.epochs} epochs ({steps} steps) on {len(train_pairs)} pairs; "
        f"best val MAE {result.best_val:.6f} at step {result.best_step}"
    )
    return 0


def _image_dir(root: str) -> str:
    sub = os.path.join(root, "images")
    return sub if os.path.isdir(sub) else root


def _mask_dir(root: str) -> str:
    sub = os.path.join(root, "masks")
    return sub if os.path.isdir(sub) else root


def _listing(directory: str, suffix: str) -> dict[str, str]:
    if not os.path.isdir(directory):
        raise DataError(f"not a directory: {directory}")
    return {
        os.path.splitext(name)[0]: os.path.join(directory, name)
        for name in sorted(os.listdir(directory))
        if name.endswith(suffix)
    }


def load_model(checkpoint_path: str, config_path: str | None) -> Model:
    if config_path is None:
        candidate = os.path.join(os.path.dirname(checkpoint_path) or ".", "model.cfg")
        config_path = candidate if os.path.exists(candidate) else None
    model = build(_load_config(config_path)).eval()
    checkpoint_load(model, checkpoint_path)
    return model


def infer_map(model: Model, image_path: str) -> np.ndarray:
    """Prediction map for one image file as round(255 * p) bytes.

    Off-size inputs are resized to the model extent and the map is
    resized back, so output extents always equal input extents.
    """
    raw = read_pixmap(image_path)
    if raw.ndim != 3:
        raise DataError(f"{image_path}: expected a color image")
    tensor = Tensor(raw.astype(np.float64).transpose(2, 0, 1) / 255.0)
    height, width = raw.shape[:2]
    size = model.config.input_size
    if (height, width) != (size, size):
        tensor = T.bilinear_resize(tensor, size, size)
    _, final = model(tensor)
    if (height, width) != (size, size):
        final = T.bilinear_resize(final, height, width)
    return np.rint(255.0 * np.clip(final.data[0], 0.0, 1.0)).astype(np.uint8)


def cmd_infer(args) -> int:
    model = load_model(args.checkpoint, args.config)
    images = _listing(_image_dir(args.data), ".ppm")
    if not images:
        raise DataError(f"no .ppm images under {args.data}")
    os.makedirs(args.out, exist_ok=True)
    stems = sorted(images)
    with T.no_grad():
        with ThreadPoolExecutor(max_workers=resolve_jobs(args.jobs)) as pool:
            maps = list(pool.map(lambda s: infer_map(model, images[s]), stems))
    for stem, gray in zip(stems, maps):
        write_pgm(os.path.join(args.out, stem + ".pgm"), gray)
    print(f"wrote {len(stems)} maps under {args.out}")
    return 0


def _score_one(pred_path: str, gt_path: str):
    pred_raw = read_pixmap(pred_path)
    if pred_raw.ndim != 2:
        raise DataError(f"{pred_path}: prediction maps must be grayscale")
    gt_raw = read_pixmap(gt_path)
    if gt_raw.ndim != 2:
        raise DataError(f"{gt_path}: ground truth must be grayscale")
    pred = pred_raw.astype(np.float64) / 255.0
    return evaluate_pair(pred, binarize_mask(gt_raw))


def cmd_eval(args) -> int:
    preds = _listing(args.pred, ".pgm")
    gts = _listing(_mask_dir(args.data), ".pgm")
    if preds.keys() != gts.keys():
        odd = ", ".join(sorted(preds.keys() ^ gts.keys()))
        raise DataError(f"unmatched filenames between predictions and ground truth: {odd}")
    if not preds:
        raise DataError("no prediction/ground-truth pairs to score")
    stems = sorted(preds)
    with ThreadPoolExecutor(max_workers=resolve_jobs(args.jobs)) as pool:
        reports = list(pool.map(lambda s: _score_one(preds[s], gts[s]), stems))
    rows = [(stem + ".pgm", report) for stem, report in zip(stems, reports)]
    text = report_csv(rows)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "metrics.csv"), "w") as fh:
            fh.write(text)
        print(f"wrote {os.path.join(args.out, 'metrics.csv')}")
    else:
        sys.stdout.write(text)
    return 0


def _golden_paths(root: str):
    return (
        os.path.join(root, "config.cfg"),
        os.path.join(root, "model.ckpt"),
        os.path.join(root, "images"),
        os.path.join(root, "maps"),
    )


def cmd_golden(args) -> int:
    cfg_path, ckpt_path, image_dir, map_dir = _golden_paths(args.out)
    if args.mode == "regenerate":
        cfg = config_mod.desk_profile()
        os.makedirs(args.out, exist_ok=True)
        config_mod.save(cfg, cfg_path)
        spec = SynthSpec(size=cfg.input_size, contrast=0.1, seed=cfg.seed)
        samples = [make_pair(spec, i) for i in range(GOLDEN_TRAIN_PAIRS)]
        model = build(cfg)
        train(
            model,
            samples[: GOLDEN_TRAIN_PAIRS - 4],
            samples[GOLDEN_TRAIN_PAIRS - 4 :],
            TrainSettings(steps=GOLDEN_TRAIN_STEPS, batch_size=4),
        )
        checkpoint_save(model.eval(), ckpt_path)
        probe = SynthSpec(size=cfg.input_size, contrast=0.1, seed=GOLDEN_IMAGE_SEED)
        os.makedirs(image_dir, exist_ok=True)
        os.makedirs(map_dir, exist_ok=True)
        for i in range(GOLDEN_IMAGES):
            stem = f"{i:04d}"
            rgb = np.rint(255.0 * make_pair(probe, i).image.transpose(1, 2, 0)).astype(np.uint8)
            write_ppm(os.path.join(image_dir, stem + ".ppm"), rgb)
            with T.no_grad():
                gray = infer_map(model, os.path.join(image_dir, stem + ".ppm"))
            write_pgm(os.path.join(map_dir, stem + ".pgm"), gray)
        print(f"regenerated golden files under {args.out}")
        return 0

    model = load_model(ckpt_path, cfg_path)
    images = _listing(image_dir, ".ppm")
    maps = _listing(map_dir, ".pgm")
    if not images or images.keys() != maps.keys():
        raise DataError(f"golden directory {args.out} is incomplete")
    mismatched = []
    with T.no_grad():
        for stem in sorted(images):
            gray = infer_map(model, images[stem])
            expected = read_pixmap(maps[stem])
            if gray.shape != expected.shape or gray.tobytes() != expected.tobytes():
                mismatched.append(stem)
    if mismatched:
        raise NumericError(f"golden maps differ: {', '.join(mismatched)}")
    print(f"verified {len(images)} golden maps")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
