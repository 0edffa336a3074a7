"""Texture Learner: amplitude/frequency maps from the LR features plus a
scale-conditioned phase, combined as amp * sin(freq . offset + phase).

Amplitude and the two per-axis frequency maps each come from a 3x3
convolution (64 -> 256 channels); the phase vector is an MLP of the HR cell
size with a sigmoid output, shared by every coordinate of a given scale.
Maps are sampled at each query's nearest LR position (nearest neighbor).
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .coords import CoordSet
from .nn_core import Mlp, check_finite


class TextureLearner(nn.Module):
    def __init__(self, in_channels=64, texture_channels=256, phase_hidden=128):
        super().__init__()
        self.texture_channels = texture_channels
        conv = lambda: nn.Conv2d(
            in_channels, texture_channels, 3, padding=1, padding_mode="reflect"
        )
        self.amp_conv = conv()
        self.freq_x_conv = conv()
        self.freq_y_conv = conv()
        self.phase_net = Mlp(
            [2, phase_hidden, texture_channels], ["relu", "sigmoid"]
        )

    def compute_maps(self, feat: torch.Tensor):
        """(C,H,W) LR features -> (amp, freq_x, freq_y), each (T,H,W)."""
        x = feat.unsqueeze(0)
        amp = self.amp_conv(x).squeeze(0)
        fx = self.freq_x_conv(x).squeeze(0)
        fy = self.freq_y_conv(x).squeeze(0)
        return amp, fx, fy

    def phase(self, cell: torch.Tensor) -> torch.Tensor:
        """Cell size (2/mh, 2/mw) -> phase vector in (0,1)^T."""
        return self.phase_net(cell.reshape(1, 2)).reshape(-1)

    def features(self, maps, coord_set: CoordSet) -> torch.Tensor:
        """Per-coordinate texture features, N x T."""
        amp, fx, fy = maps
        t, h, w = amp.shape
        flat = coord_set.nearest_idx[:, 0] * w + coord_set.nearest_idx[:, 1]
        amp_s = amp.reshape(t, -1)[:, flat].t()  # N x T
        fx_s = fx.reshape(t, -1)[:, flat].t()
        fy_s = fy.reshape(t, -1)[:, flat].t()
        dy = coord_set.local_grid[:, 0:1]
        dx = coord_set.local_grid[:, 1:2]
        phase = self.phase(coord_set.cell.to(amp.dtype))
        out = amp_s * torch.sin(fx_s * dx + fy_s * dy + phase)
        check_finite(out, "texture_learner")
        return out

    def forward(self, feat: torch.Tensor, coord_set: CoordSet) -> torch.Tensor:
        return self.features(self.compute_maps(feat), coord_set)
