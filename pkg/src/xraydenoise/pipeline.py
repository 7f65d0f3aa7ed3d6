"""Disk-level pipeline stages shared by the command line and the tests.

Each stage is a pure function of (config, input files): generate phantoms,
train from a data directory, evaluate a checkpoint. File naming inside the
data directory is fixed (train/ and val/ subdirectories, sorted order), so
re-running a stage with the same config reproduces its outputs exactly.
"""

import json
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .config import RunConfig
from .errors import ContractError
from .imaging import Dataset, Domain, Image, extract_patches, load_image, save_image
from .losses import SsimParams
from .metrics import EvalReport, evaluate, gaussian_denoise
from .nn.infer import denoise_image
from .nn.model import Model, build_model, load_checkpoint, save_checkpoint
from .noise import GainModel, estimate_gain
from .phantom import generate_dataset
from .training import TrainHistory, train

Log = Optional[Callable[[str], None]]

CHECKPOINT_NAME = "model.ckpt"
_ARCH_LABELS = {"resnet": "ResNet", "plain_cnn": "PlainCNN"}


def _say(log: Log, msg: str):
    if log is not None:
        log(msg)


def run_phantom(cfg: RunConfig, log: Log = None) -> dict:
    """Generate the phantom dataset and write it under cfg.data_dir.

    Writes train/NNN.pgm and val/NNN.pgm plus a manifest.json recording the
    seeds and image names. Returns the manifest.
    """
    base = cfg.resolved_phantom()
    ds = generate_dataset(cfg.n_train, cfg.n_val, base, seed=cfg.phantom_seed(),
                          patches_per_image=0)
    data_dir = Path(cfg.data_dir)
    manifest = {"global_seed": cfg.seed, "phantom_seed": cfg.phantom_seed(),
                "train": [], "val": []}
    for split, images in (("train", ds.train_images), ("val", ds.val_images)):
        split_dir = data_dir / split
        split_dir.mkdir(parents=True, exist_ok=True)
        for img in images:
            path = split_dir / f"{img.name}.pgm"
            save_image(img, path)
            manifest[split].append(img.name)
        _say(log, f"wrote {len(images)} {split} images to {split_dir}")
    (data_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_split(cfg: RunConfig) -> Tuple[List[Image], List[Image]]:
    """Load train/ and val/ images from cfg.data_dir in sorted name order."""
    data_dir = Path(cfg.data_dir)
    out = []
    for split in ("train", "val"):
        split_dir = data_dir / split
        if not split_dir.is_dir():
            raise ContractError(f"data directory {split_dir} not found; "
                                f"run the phantom stage or point data_dir at a dataset")
        paths = sorted(p for p in split_dir.iterdir()
                       if p.suffix.lower() in (".pgm", ".png", ".f64", ".raw"))
        if not paths:
            raise ContractError(f"no images found in {split_dir}")
        out.append([load_image(p) for p in paths])
    return out[0], out[1]


def build_patch_dataset(cfg: RunConfig, train_images: List[Image],
                        val_images: List[Image]) -> Dataset:
    """Cut training/validation patches with per-image derived seeds."""
    def cut(images):
        patches = []
        for img in images:
            patches.extend(extract_patches(
                img, cfg.patch_size, cfg.patches_per_image,
                strategy="random", seed=cfg.patch_seed(img.name)))
        return patches

    ds = Dataset(train_images=train_images, val_images=val_images,
                 train_patches=cut(train_images), val_patches=cut(val_images),
                 split_seed=cfg.seed)
    ds.validate()
    return ds


def run_train(cfg: RunConfig, log: Log = None,
              on_batch: Optional[Callable] = None) -> Tuple[Model, TrainHistory]:
    """Train from the data directory; write the checkpoint and history."""
    train_images, val_images = load_split(cfg)
    dataset = build_patch_dataset(cfg, train_images, val_images)
    _say(log, f"{len(dataset.train_patches)} train / {len(dataset.val_patches)} "
              f"val patches of {cfg.patch_size}x{cfg.patch_size}")
    model = build_model(cfg.model, init_seed=cfg.model_init_seed())
    gain = GainModel(k=cfg.gain_k)
    tcfg = cfg.resolved_train()
    model, history = train(model, dataset, gain, tcfg,
                           checkpoint_dir=cfg.checkpoint_dir, on_batch=on_batch,
                           log=log, ssim_params=cfg.ssim)
    ckpt_dir = Path(cfg.checkpoint_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = ckpt_dir / CHECKPOINT_NAME
    save_checkpoint(model, ckpt_path,
                    meta={"global_seed": cfg.seed, "train_seed": tcfg.seed,
                          "epochs": history.epochs_completed})
    history.write_table(cfg.history_path)
    _say(log, f"checkpoint: {ckpt_path}")
    _say(log, f"history: {cfg.history_path}")
    return model, history


def simulate_noisy(img: Image, alpha: float, seed: int, gain: GainModel) -> Image:
    """One reduced-dose acquisition of a raw-count image, in counts."""
    if img.domain is not Domain.RAW_COUNTS:
        raise ContractError(f"simulate expects raw counts, got {img.domain}")
    if not (0.0 < alpha <= 1.0):
        raise ContractError(f"alpha must be in (0, 1], got {alpha!r}")
    lam = img.pixels / gain.k
    rng = np.random.Generator(np.random.Philox(seed))
    draws = rng.poisson(alpha * lam).astype(np.float64)
    return Image(pixels=gain.k * draws, domain=Domain.RAW_COUNTS,
                 bit_depth=img.bit_depth, name=img.name + "_noisy")


def run_evaluate(cfg: RunConfig, log: Log = None,
                 checkpoint_path=None) -> EvalReport:
    """Score the trained model against the Gaussian baseline on the val split.

    For each validation image: a seeded reduced-dose acquisition is the
    noisy input; the noiseless reduced-dose signal (alpha times the ground
    truth) is the clean reference; both denoisers run on the same input.
    Writes the text and CSV reports. Returns the report.
    """
    _, val_images = load_split(cfg)
    ckpt = Path(checkpoint_path) if checkpoint_path is not None \
        else Path(cfg.checkpoint_dir) / CHECKPOINT_NAME
    model = load_checkpoint(ckpt)
    gain = GainModel(k=cfg.gain_k)
    alpha = cfg.train.alpha

    test_set = []
    for img in val_images:
        ref = Image(pixels=alpha * img.pixels, domain=Domain.RAW_COUNTS,
                    bit_depth=img.bit_depth, name=img.name + "_ref")
        ny = simulate_noisy(img, alpha, cfg.eval_noise_seed(img.name), gain)
        test_set.append((ref, ny))

    def _net(ny: Image, g: GainModel) -> Image:
        out = denoise_image(model, ny, g, output_domain="counts",
                            inverse_mode=cfg.inverse_mode,
                            tile=cfg.tile, overlap=cfg.overlap)
        _say(log, f"denoised {ny.name}")
        return out

    def _gauss(ny: Image, g: GainModel) -> Image:
        return gaussian_denoise(ny, g, cfg.gaussian_sigma, cfg.inverse_mode)

    label = _ARCH_LABELS[model.config.arch]
    methods = [("Gaussian", _gauss), (label, _net)]
    params = replace(cfg.ssim, dynamic_range=1.0)
    report = evaluate(methods, test_set, gain, ssim_params=params)
    Path(cfg.report_path).write_text(report.to_text() + "\n")
    Path(cfg.report_csv_path).write_text(report.to_csv())
    _say(log, f"report: {cfg.report_path}")
    return report


def simulate_file(in_path, out_path, alpha: float, seed: int,
                  gain_k: float = 1.0) -> Image:
    """CLI core of the simulate stage: read, draw, write, return the image."""
    img = load_image(in_path)
    noisy = simulate_noisy(img, alpha, seed, GainModel(k=gain_k))
    save_image(noisy, out_path)
    return noisy


def denoise_file(checkpoint_path, in_path, out_path, gain_k: float = 1.0,
                 inverse_mode: str = "unbiased", tile: int = 64,
                 overlap: int = 16) -> Image:
    """CLI core of the denoise stage: checkpoint + image in, image out."""
    model = load_checkpoint(checkpoint_path)
    img = load_image(in_path)
    out = denoise_image(model, img, GainModel(k=gain_k),
                        output_domain="counts", inverse_mode=inverse_mode,
                        tile=tile, overlap=overlap)
    save_image(out, out_path)
    return out


def gain_estimate_file(in_path, roi: Optional[Tuple[int, int, int, int]] = None):
    """Estimate the gain from an image, optionally restricted to a flat ROI
    given as (row, col, height, width)."""
    img = load_image(in_path)
    pixels = img.pixels
    if roi is not None:
        r, c, h, w = roi
        if r < 0 or c < 0 or h < 1 or w < 1 or r + h > pixels.shape[0] \
                or c + w > pixels.shape[1]:
            raise ContractError(f"roi {roi} outside image {pixels.shape}")
        pixels = pixels[r:r + h, c:c + w]
    return estimate_gain(pixels)
