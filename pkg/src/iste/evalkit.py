"""Metrics and reporting: PSNR, single-scale SSIM, error maps, retrieval
visualizations, the bicubic baseline, and the CSV + figure report writer.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .coords import round_half_up
from .data import TrainConfig, degrade
from .errors import ConfigError, ShapeError
from .resample import bicubic_upscale

PSNR_CAP = 99.0

DEFAULT_SCALES = (2.0, 3.0, 4.0, 6.0, 8.0)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def psnr(pred: torch.Tensor, gt: torch.Tensor) -> float:
    """10*log10(1/MSE) over all channels on [0,1] data; exact match capped
    at 99 dB so tables stay finite."""
    if pred.shape != gt.shape:
        raise ShapeError(f"psnr shape mismatch: {tuple(pred.shape)} vs {tuple(gt.shape)}")
    mse = float(((pred - gt) ** 2).mean())
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def to_luma(image: torch.Tensor) -> torch.Tensor:
    """(3,H,W) RGB -> (H,W) luma, Y = 0.299R + 0.587G + 0.114B."""
    r, g, b = image[0], image[1], image[2]
    return 0.299 * r + 0.587 * g + 0.114 * b


def _ssim_window(dtype):
    x = torch.arange(SSIM_WINDOW, dtype=dtype) - (SSIM_WINDOW - 1) / 2.0
    k = torch.exp(-(x * x) / (2.0 * SSIM_SIGMA * SSIM_SIGMA))
    k = k / k.sum()
    return (k.reshape(-1, 1) * k.reshape(1, -1)).reshape(1, 1, SSIM_WINDOW, SSIM_WINDOW)


def ssim(pred: torch.Tensor, gt: torch.Tensor) -> float:
    """Single-scale SSIM on luma, 11x11 Gaussian window sigma 1.5, mean over
    valid (unpadded) windows."""
    if pred.shape != gt.shape:
        raise ShapeError(f"ssim shape mismatch: {tuple(pred.shape)} vs {tuple(gt.shape)}")
    x = to_luma(pred).unsqueeze(0).unsqueeze(0)
    y = to_luma(gt).unsqueeze(0).unsqueeze(0)
    if x.shape[-1] < SSIM_WINDOW or x.shape[-2] < SSIM_WINDOW:
        raise ShapeError(
            f"image {tuple(x.shape[-2:])} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    w = _ssim_window(x.dtype)
    mu_x = F.conv2d(x, w)
    mu_y = F.conv2d(y, w)
    xx = F.conv2d(x * x, w) - mu_x * mu_x
    yy = F.conv2d(y * y, w) - mu_y * mu_y
    xy = F.conv2d(x * y, w) - mu_x * mu_y
    num = (2 * mu_x * mu_y + SSIM_C1) * (2 * xy + SSIM_C2)
    den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (xx + yy + SSIM_C2)
    return float((num / den).mean())


def error_map(pred: torch.Tensor, gt: torch.Tensor, path) -> np.ndarray:
    """Per-pixel mean absolute error rendered through a monotone colormap
    (brighter = larger error); returns the raw error array."""
    if pred.shape != gt.shape:
        raise ShapeError("error_map shape mismatch")
    err = (pred - gt).abs().mean(dim=0).numpy()
    vmax = err.max() if err.max() > 0 else 1.0
    plt.imsave(path, err, cmap="inferno", vmin=0.0, vmax=vmax)
    return err


def retrieval_map(index_map, confidence, grid_dims, path, top_fraction=0.01) -> int:
    """Confidence heatmap with arrows from each retrieved source position to
    its query for the top-`top_fraction` confidences; zero-length arrows are
    suppressed. Returns the number of arrows drawn."""
    mh, mw = grid_dims
    index_map = torch.as_tensor(index_map).reshape(-1)
    confidence = torch.as_tensor(confidence, dtype=torch.float32).reshape(-1)
    n = index_map.numel()
    k = max(1, math.ceil(top_fraction * n))
    top = torch.topk(confidence, min(k, n)).indices
    fig, ax = plt.subplots(figsize=(6, 6 * mh / mw))
    ax.imshow(confidence.reshape(mh, mw).numpy(), cmap="viridis")
    drawn = 0
    for qi in top.tolist():
        ti = int(index_map[qi])
        if ti == qi:
            continue
        sy, sx = divmod(ti, mw)
        qy, qx = divmod(qi, mw)
        ax.annotate(
            "",
            xy=(qx, qy),
            xytext=(sx, sy),
            arrowprops=dict(arrowstyle="->", color="#2060ff", lw=1.0),
        )
        drawn += 1
    ax.set_axis_off()
    fig.savefig(path, bbox_inches="tight", dpi=120)
    plt.close(fig)
    return drawn


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)  # (scale, metric, value, n_images)
    artifacts: list = field(default_factory=list)
    checkpoint_hash: str = ""

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["scale", "metric", "value", "n_images", "checkpoint_hash"])
            for scale, metric, value, n in self.rows:
                w.writerow([f"{scale:g}", metric, repr(value), n, self.checkpoint_hash])

    def value(self, scale, metric):
        for s, m, v, _ in self.rows:
            if s == scale and m == metric:
                return v
        raise KeyError((scale, metric))


def _predict(model, lr_patch, scale):
    if model == "bicubic":
        return bicubic_upscale(lr_patch, scale).clamp(0.0, 1.0)
    return model.predict_image(lr_patch, scale)


def evaluate(
    model,
    corpus,
    scales=DEFAULT_SCALES,
    seed: int = 1234,
    out_dir=None,
    train_config: TrainConfig | None = None,
    checkpoint_hash: str | None = None,
    save_maps: bool = True,
) -> EvalReport:
    """Score a model (or the literal "bicubic") on a corpus: per image and
    scale, degrade with a fixed eval seed, predict, and aggregate mean
    PSNR/SSIM. Writes report.csv, error maps, and a PSNR-vs-scale figure
    when `out_dir` is given.
    """
    if not corpus:
        raise ConfigError("evaluate needs a non-empty corpus")
    cfg = train_config or TrainConfig()
    if checkpoint_hash is None:
        checkpoint_hash = (
            "bicubic" if model == "bicubic" else model.config.hash()[:16]
        )
    report = EvalReport(checkpoint_hash=checkpoint_hash)
    out_dir = Path(out_dir) if out_dir is not None else None
    art_dir = None
    if out_dir is not None:
        run_id = hashlib.sha256(
            f"{checkpoint_hash}:{seed}:{list(scales)}".encode()
        ).hexdigest()[:12]
        art_dir = out_dir / "artifacts" / run_id
        art_dir.mkdir(parents=True, exist_ok=True)
    mean_psnr = []
    for scale in scales:
        ps, ss = [], []
        for i, image in enumerate(corpus):
            gen = torch.Generator().manual_seed(seed + i)
            lr_patch, hr_patch = degrade(image, scale, cfg, gen)
            pred = _predict(model, lr_patch, scale)
            if pred.shape != hr_patch.shape:
                # non-integer scales: round(m*48) may differ from the crop
                side = min(pred.shape[-1], hr_patch.shape[-1])
                pred = pred[:, :side, :side]
                hr_patch = hr_patch[:, :side, :side]
            ps.append(psnr(pred, hr_patch))
            ss.append(ssim(pred, hr_patch))
            if art_dir is not None and save_maps:
                error_map(pred, hr_patch, art_dir / f"error_s{scale:g}_i{i:03d}.png")
        report.rows.append((scale, "psnr", sum(ps) / len(ps), len(corpus)))
        report.rows.append((scale, "ssim", sum(ss) / len(ss), len(corpus)))
        mean_psnr.append(sum(ps) / len(ps))
    if out_dir is not None:
        report.write_csv(out_dir / "report.csv")
        fig, ax = plt.subplots()
        ax.plot(list(scales), mean_psnr, marker="o")
        ax.set_xlabel("scale")
        ax.set_ylabel("mean PSNR (dB)")
        ax.grid(True, alpha=0.3)
        fig.savefig(out_dir / "psnr_vs_scale.png", bbox_inches="tight", dpi=120)
        plt.close(fig)
        if art_dir is not None:
            report.artifacts = sorted(str(p) for p in art_dir.glob("*.png"))
    return report
