"""Data pipeline: corpus ingestion, the synthetic periodic-texture corpus,
the degradation protocol (crop round(48m), bicubic resize to 48, Gaussian
blur), RGB-coordinate pair sampling, and the L1 training loop.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .coords import full_grid_coords, make_coord_set, round_half_up
from .errors import ConfigError, CorpusError, TrainingDivergedError
from .model import IsteModel, ModelConfig
from .nn_core import adam_step, make_adam, save_checkpoint

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    patch: int = 48
    scale_min: float = 1.0
    scale_max: float = 4.0
    samples_per_patch: int = 2304
    lr: float = 1e-4
    epochs: int = 10
    batch: int = 16
    blur_kernel: int = 5
    blur_sigma: float = 1.0
    seed: int = 0
    checkpoint_every: int = 1
    max_steps: int = 0  # 0 = no cap beyond epochs

    def __post_init__(self):
        if self.samples_per_patch > self.patch * self.patch * 16:
            raise ConfigError(
                "samples_per_patch must fit the HR patch at max scale "
                f"({self.samples_per_patch} > {self.patch * self.patch * 16})"
            )
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


# -- corpus ---------------------------------------------------------------


def load_corpus(directory) -> list:
    """Decode every PNG in `directory` (sorted by name) to [0,1] RGB tensors.

    Undecodable files are skipped with a warning; an empty result is an error.
    """
    from PIL import Image

    directory = Path(directory)
    if not directory.is_dir():
        raise CorpusError(f"corpus directory not found: {directory}")
    images = []
    for path in sorted(directory.glob("*.png")):
        try:
            with Image.open(path) as im:
                if im.mode in ("I", "I;16", "I;16B"):
                    arr = np.asarray(im, dtype=np.float32) / 65535.0
                    arr = np.stack([arr] * 3, axis=-1)
                else:
                    arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
        except Exception as exc:
            log.warning("skipping undecodable file %s: %s", path.name, exc)
            continue
        images.append(torch.from_numpy(arr).permute(2, 0, 1).contiguous())
    if not images:
        raise CorpusError(f"no decodable PNG images in {directory}")
    return images


def synth_corpus(n: int, size: int = 192, seed: int = 0) -> list:
    """Synthetic stand-in corpus: elliptical "cells" over mixed-frequency
    sinusoidal background textures; deterministic in `seed`."""
    if n and size < 192:
        raise ConfigError(f"synthetic images must be >= 192 px, got {size}")
    rng = np.random.default_rng(seed)
    ys, xs = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    images = []
    for _ in range(n):
        img = np.full((size, size, 3), 0.78, dtype=np.float32)
        img += rng.uniform(-0.05, 0.05, size=3).astype(np.float32)
        for _ in range(3):
            freq = rng.uniform(2.0, 14.0) / size
            theta = rng.uniform(0, np.pi)
            phase = rng.uniform(0, 2 * np.pi)
            amp = rng.uniform(0.04, 0.10)
            wave = amp * np.sin(
                2 * np.pi * freq * (np.cos(theta) * xs + np.sin(theta) * ys) + phase
            )
            tint = rng.uniform(0.4, 1.0, size=3)
            img += wave[..., None].astype(np.float32) * tint.astype(np.float32)
        n_cells = rng.integers(25, 60)
        for _ in range(n_cells):
            cy, cx = rng.uniform(0, size, size=2)
            ay, ax = rng.uniform(4.0, 14.0, size=2)
            rot = rng.uniform(0, np.pi)
            color = np.array(
                [rng.uniform(0.25, 0.45), rng.uniform(0.1, 0.3), rng.uniform(0.35, 0.6)],
                dtype=np.float32,
            )
            dy, dx = ys - cy, xs - cx
            u = (np.cos(rot) * dx + np.sin(rot) * dy) / ax
            v = (-np.sin(rot) * dx + np.cos(rot) * dy) / ay
            d = u * u + v * v
            mask = np.clip((1.2 - d) / 0.4, 0.0, 1.0).astype(np.float32)
            img = img * (1 - mask[..., None]) + mask[..., None] * color
        img = np.clip(img, 0.02, 0.98)
        images.append(torch.from_numpy(img).permute(2, 0, 1).contiguous())
    return images


def save_corpus(images, directory) -> list:
    """Write tensors as 8-bit PNGs; returns the written paths."""
    from PIL import Image

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(images):
        arr = (img.permute(1, 2, 0).numpy() * 255.0).round().clip(0, 255).astype(np.uint8)
        p = directory / f"synth_{i:04d}.png"
        Image.fromarray(arr).save(p)
        paths.append(p)
    return paths


# -- degradation ----------------------------------------------------------


def gaussian_kernel1d(kernel: int, sigma: float) -> torch.Tensor:
    x = torch.arange(kernel, dtype=torch.float32) - (kernel - 1) / 2.0
    k = torch.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(image: torch.Tensor, kernel: int = 5, sigma: float = 1.0) -> torch.Tensor:
    """Separable Gaussian blur of a (C,H,W) tensor with reflect padding."""
    c = image.shape[0]
    k1 = gaussian_kernel1d(kernel, sigma).to(image.dtype)
    p = kernel // 2
    x = image.unsqueeze(0)
    x = F.pad(x, (0, 0, p, p), mode="reflect")
    x = F.conv2d(x, k1.reshape(1, 1, kernel, 1).expand(c, 1, kernel, 1), groups=c)
    x = F.pad(x, (p, p, 0, 0), mode="reflect")
    x = F.conv2d(x, k1.reshape(1, 1, 1, kernel).expand(c, 1, 1, kernel), groups=c)
    return x.squeeze(0)


def degrade(hr_image: torch.Tensor, m: float, cfg: TrainConfig, gen: torch.Generator):
    """Random crop of round(patch*m) square, bicubic resize to patch, then
    Gaussian blur; returns (lr_patch, hr_patch)."""
    from .resample import bicubic_resize

    s = round_half_up(cfg.patch * m)
    _, h, w = hr_image.shape
    if h < s or w < s:
        raise CorpusError(
            f"image {h}x{w} too small for a {s}x{s} crop at scale {m:.3g}"
        )
    top = int(torch.randint(0, h - s + 1, (1,), generator=gen))
    left = int(torch.randint(0, w - s + 1, (1,), generator=gen))
    hr_patch = hr_image[:, top : top + s, left : left + s]
    lr = bicubic_resize(hr_patch, cfg.patch, cfg.patch)
    lr = gaussian_blur(lr, cfg.blur_kernel, cfg.blur_sigma)
    return lr.clamp(0.0, 1.0), hr_patch


def sample_pairs(hr_patch: torch.Tensor, k: int, gen: torch.Generator):
    """Sample k distinct HR pixel centers uniformly; returns (coords, rgb)."""
    _, h, w = hr_patch.shape
    total = h * w
    if k > total:
        raise ConfigError(f"cannot sample {k} pixels from a {h}x{w} patch")
    flat = torch.randperm(total, generator=gen)[:k]
    coords = full_grid_coords(h, w)[flat]
    rgb = hr_patch.reshape(3, -1)[:, flat].t()
    return coords, rgb


# -- training -------------------------------------------------------------


def l1_loss(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    return (pred - gt).abs().mean()


def train(
    config: TrainConfig,
    model_config: ModelConfig,
    corpus,
    out_dir,
    model: IsteModel | None = None,
):
    """Run the training protocol; writes loss.csv and model.ckpt under
    `out_dir` and returns (model, checkpoint_path, losses)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not corpus:
        raise CorpusError("empty training corpus")
    if model is None:
        model = IsteModel(model_config)
    model.train()
    store = model.param_store()
    opt = make_adam(store, lr=config.lr)
    gen = torch.Generator().manual_seed(config.seed)

    steps_per_epoch = max(1, math.ceil(len(corpus) / config.batch))
    total_steps = config.epochs * steps_per_epoch
    if config.max_steps:
        total_steps = min(total_steps, config.max_steps)

    ckpt_path = out_dir / "model.ckpt"
    losses = []
    with open(out_dir / "loss.csv", "w") as loss_file:
        loss_file.write("step,epoch,scale,loss\n")
        for step in range(total_steps):
            epoch = step // steps_per_epoch
            m = config.scale_min + (config.scale_max - config.scale_min) * float(
                torch.rand(1, generator=gen)
            )
            batch_loss = 0.0
            for _ in range(config.batch):
                idx = int(torch.randint(0, len(corpus), (1,), generator=gen))
                lr_patch, hr_patch = degrade(corpus[idx], m, config, gen)
                coords, gt = sample_pairs(hr_patch, config.samples_per_patch, gen)
                s = hr_patch.shape[-1]
                cs = make_coord_set(
                    (config.patch, config.patch),
                    scale=m,
                    coords=coords,
                    cell=(2.0 / s, 2.0 / s),
                )
                pred = model(lr_patch, cs)
                batch_loss = batch_loss + l1_loss(pred, gt)
            loss = batch_loss / config.batch
            if not torch.isfinite(loss):
                diag = {"step": step, "epoch": epoch, "scale": m, "seed": config.seed}
                (out_dir / "divergence.json").write_text(json.dumps(diag, indent=2))
                raise TrainingDivergedError(f"non-finite loss at step {step}: {diag}")
            loss.backward()
            adam_step(opt, store)
            val = float(loss.detach())
            losses.append(val)
            loss_file.write(f"{step},{epoch},{m!r},{val!r}\n")
            if (step + 1) % steps_per_epoch == 0 and (epoch + 1) % config.checkpoint_every == 0:
                save_checkpoint(store, model_config.to_dict(), ckpt_path)
    save_checkpoint(store, model_config.to_dict(), ckpt_path)
    model.eval()
    return model, ckpt_path, losses
