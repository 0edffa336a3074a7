"""Residual convolutional encoder producing the 64-channel LR feature map.

EDSR-style without upsampling: conv stem, residual blocks (conv-relu-conv +
skip), final conv with a global skip back to the stem. Spatial dims are
preserved end to end; reflect padding avoids dark borders on tiles.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch.nn as nn

from .errors import ShapeError
from .nn_core import check_finite


@dataclass
class EncoderConfig:
    channels: int = 64
    n_blocks: int = 4
    kernel: int = 3


class ResidualBlock(nn.Module):
    def __init__(self, channels, kernel=3):
        super().__init__()
        pad = kernel // 2
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels, kernel, padding=pad, padding_mode="reflect"),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, kernel, padding=pad, padding_mode="reflect"),
        )

    def forward(self, x):
        return x + self.body(x)


class Encoder(nn.Module):
    def __init__(self, config: EncoderConfig | None = None):
        super().__init__()
        cfg = config or EncoderConfig()
        self.config = cfg
        pad = cfg.kernel // 2
        self.stem = nn.Conv2d(
            3, cfg.channels, cfg.kernel, padding=pad, padding_mode="reflect"
        )
        self.blocks = nn.Sequential(
            *[ResidualBlock(cfg.channels, cfg.kernel) for _ in range(cfg.n_blocks)]
        )
        self.final = nn.Conv2d(
            cfg.channels, cfg.channels, cfg.kernel, padding=pad, padding_mode="reflect"
        )

    def forward(self, image):
        """(3,H,W) or (B,3,H,W) in [0,1] -> feature map with `channels` planes."""
        c_dim = 0 if image.ndim == 3 else 1
        if image.ndim not in (3, 4) or image.shape[c_dim] != 3:
            raise ShapeError(
                f"encoder expects RGB input (3,H,W), got {tuple(image.shape)}"
            )
        squeeze = image.ndim == 3
        if squeeze:
            image = image.unsqueeze(0)
        x = self.stem(image)
        x = x + self.final(self.blocks(x))
        check_finite(x, "encoder")
        return x.squeeze(0) if squeeze else x
