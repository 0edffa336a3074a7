"""Local Feature Interactor: 3x3 windowed self-attention over the LR feature
map. Each position attends over ten sources -- itself, the window mean, and
its eight neighbors -- with projections shared across positions.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError
from .nn_core import check_finite

# window ring offsets in row-major order (dy, dx), excluding the center
_NEIGHBOR_OFFSETS = [
    (-1, -1), (-1, 0), (-1, 1),
    (0, -1), (0, 1),
    (1, -1), (1, 0), (1, 1),
]


def build_windows(feat: torch.Tensor):
    """Per-position window sources of a (C,H,W) map with replicate borders.

    Returns (center, pooled, neighbors) shaped (H*W,C), (H*W,C), (H*W,8,C);
    pooled is the mean of the nine in-window vectors.
    """
    c, h, w = feat.shape
    padded = F.pad(feat.unsqueeze(0), (1, 1, 1, 1), mode="replicate").squeeze(0)
    center = feat.permute(1, 2, 0).reshape(h * w, c)
    neigh = []
    for dy, dx in _NEIGHBOR_OFFSETS:
        shifted = padded[:, 1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        neigh.append(shifted.permute(1, 2, 0).reshape(h * w, c))
    neighbors = torch.stack(neigh, dim=1)
    pooled = (center + neighbors.sum(dim=1)) / 9.0
    return center, pooled, neighbors


class LocalFeatureInteractor(nn.Module):
    """Scaled dot-product attention over the ten window sources.

    By default one key and one value projection is shared by all sources;
    `grouped_kv=True` switches to separate projections for the self, pooled,
    and neighbor groups.
    """

    def __init__(self, channels=64, attn_dim=64, grouped_kv=False):
        super().__init__()
        if attn_dim <= 0:
            raise ConfigError(f"attention dim must be positive, got {attn_dim}")
        self.attn_dim = attn_dim
        self.grouped_kv = grouped_kv
        self.q_proj = nn.Linear(channels, attn_dim)
        n_groups = 3 if grouped_kv else 1
        self.k_projs = nn.ModuleList(
            nn.Linear(channels, attn_dim) for _ in range(n_groups)
        )
        self.v_projs = nn.ModuleList(
            nn.Linear(channels, channels) for _ in range(n_groups)
        )

    def _project(self, projs, center, pooled, neighbors):
        if self.grouped_kv:
            sp, pp, np_ = projs
        else:
            sp = pp = np_ = projs[0]
        parts = [sp(center).unsqueeze(1), pp(pooled).unsqueeze(1), np_(neighbors)]
        return torch.cat(parts, dim=1)  # N x 10 x dim

    def forward(self, feat: torch.Tensor) -> torch.Tensor:
        c, h, w = feat.shape
        center, pooled, neighbors = build_windows(feat)
        q = self.q_proj(center)  # N x d
        k = self._project(self.k_projs, center, pooled, neighbors)
        v = self._project(self.v_projs, center, pooled, neighbors)
        logits = torch.einsum("nd,nsd->ns", q, k) / math.sqrt(self.attn_dim)
        weights = torch.softmax(logits, dim=1)
        out = torch.einsum("ns,nsc->nc", weights, v)
        out = out.reshape(h, w, c).permute(2, 0, 1)
        check_finite(out, "lfi")
        return out

    def attention_weights(self, feat: torch.Tensor) -> torch.Tensor:
        """Per-position source weights (H*W, 10); for tests and diagnostics."""
        center, pooled, neighbors = build_windows(feat)
        q = self.q_proj(center)
        k = self._project(self.k_projs, center, pooled, neighbors)
        logits = torch.einsum("nd,nsd->ns", q, k) / math.sqrt(self.attn_dim)
        return torch.softmax(logits, dim=1)
