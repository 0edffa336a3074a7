"""Separable bicubic resampling (Catmull-Rom-like kernel, a = -0.5) aligned
to the half-pixel center convention used by the coordinate machinery:
output pixel i samples source position (i + 0.5) * in/out - 0.5. Borders
replicate. Works for both up- and down-scaling (no anti-alias prefilter; the
degradation pipeline applies its own blur).
"""

from __future__ import annotations

import torch

from .coords import round_half_up
from .errors import ConfigError

_A = -0.5


def _cubic(t: torch.Tensor) -> torch.Tensor:
    at = t.abs()
    at2 = at * at
    at3 = at2 * at
    w = torch.where(
        at <= 1.0,
        (_A + 2.0) * at3 - (_A + 3.0) * at2 + 1.0,
        _A * at3 - 5.0 * _A * at2 + 8.0 * _A * at - 4.0 * _A,
    )
    return torch.where(at < 2.0, w, torch.zeros_like(w))


def _axis_matrix(n_in: int, n_out: int, dtype=torch.float32) -> torch.Tensor:
    """Dense (n_out, n_in) interpolation matrix for one axis."""
    i = torch.arange(n_out, dtype=dtype)
    src = (i + 0.5) * n_in / n_out - 0.5
    base = torch.floor(src).long()
    mat = torch.zeros(n_out, n_in, dtype=dtype)
    for tap in range(-1, 3):
        idx = (base + tap).clamp(0, n_in - 1)
        w = _cubic(src - (base + tap).to(dtype))
        mat.scatter_add_(1, idx.unsqueeze(1), w.unsqueeze(1))
    return mat


def bicubic_resize(image: torch.Tensor, out_h: int, out_w: int) -> torch.Tensor:
    """Resize a (C,H,W) tensor to (C,out_h,out_w)."""
    if image.ndim != 3:
        raise ConfigError(f"expected (C,H,W), got {tuple(image.shape)}")
    c, h, w = image.shape
    ah = _axis_matrix(h, out_h, image.dtype)
    aw = _axis_matrix(w, out_w, image.dtype)
    return torch.einsum("oh,chw,pw->cop", ah, image, aw)


def bicubic_upscale(image: torch.Tensor, scale: float) -> torch.Tensor:
    """Upscale by a real factor m >= 1 to (round(m*h), round(m*w))."""
    if scale < 1:
        raise ConfigError(f"upscale factor must be >= 1, got {scale}")
    h, w = image.shape[-2:]
    return bicubic_resize(image, round_half_up(scale * h), round_half_up(scale * w))
