"""Coordinate machinery: normalized pixel centers, nearest-LR lookup, local
grid offsets, cell sizes, and the four-corner local-ensemble weights.

Conventions: coordinates are (y, x) pairs in [-1, 1], row-major grids, pixel
i of an n-pixel axis centered at -1 + (2i+1)/n. The "cell" of an HR grid with
dims (mh, mw) is (2/mh, 2/mw).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .errors import ConfigError, RangeError


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def pixel_centers(n: int) -> torch.Tensor:
    """Normalized centers of an n-pixel axis: -1 + (2i+1)/n."""
    if n < 1:
        raise ConfigError(f"axis extent must be >= 1, got {n}")
    i = torch.arange(n, dtype=torch.float32)
    return -1.0 + (2.0 * i + 1.0) / n


def nearest_index(coords: torch.Tensor, n: int) -> torch.Tensor:
    """Index of the pixel center nearest to each normalized coordinate."""
    idx = torch.floor((coords + 1.0) * n / 2.0).long()
    return idx.clamp(0, n - 1)


@dataclass
class CoordSet:
    """HR query coordinates with their LR anchors and local-grid offsets."""

    hr_coords: torch.Tensor  # N x 2, (y, x) in [-1, 1]
    nearest_lr: torch.Tensor  # N x 2, nearest LR pixel centers
    nearest_idx: torch.Tensor  # N x 2 long, (iy, ix) into the LR grid
    local_grid: torch.Tensor  # N x 2, hr_coords - nearest_lr
    cell: torch.Tensor  # (2/mh, 2/mw)
    scale: float
    hr_dims: tuple | None = None  # (mh, mw) when built as a full grid

    def __len__(self):
        return self.hr_coords.shape[0]

    def to(self, dtype):
        return CoordSet(
            self.hr_coords.to(dtype),
            self.nearest_lr.to(dtype),
            self.nearest_idx,
            self.local_grid.to(dtype),
            self.cell.to(dtype),
            self.scale,
            self.hr_dims,
        )


def full_grid_coords(mh: int, mw: int) -> torch.Tensor:
    ys = pixel_centers(mh)
    xs = pixel_centers(mw)
    gy, gx = torch.meshgrid(ys, xs, indexing="ij")
    return torch.stack([gy.reshape(-1), gx.reshape(-1)], dim=1)


def make_coord_set(lr_dims, scale=None, coords=None, cell=None) -> CoordSet:
    """Build a CoordSet for a full HR grid (given `scale`) or an explicit
    coordinate list (training samples; `cell` then names the HR pixel size).
    """
    h, w = lr_dims
    if coords is None:
        if scale is None:
            raise ConfigError("either scale or an explicit coordinate list is required")
        if scale < 1:
            raise ConfigError(f"scale must be >= 1, got {scale}")
        mh, mw = round_half_up(scale * h), round_half_up(scale * w)
        coords = full_grid_coords(mh, mw)
        cell = torch.tensor([2.0 / mh, 2.0 / mw])
        hr_dims = (mh, mw)
        m = float(scale)
    else:
        coords = torch.as_tensor(coords, dtype=torch.float32)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ConfigError(f"coords must be N x 2, got {tuple(coords.shape)}")
        if coords.numel() and (coords.min() < -1.0 or coords.max() > 1.0):
            raise RangeError("coordinates must lie in [-1, 1]")
        if cell is None:
            raise ConfigError("explicit coordinate lists require a cell size")
        cell = torch.as_tensor(cell, dtype=torch.float32)
        hr_dims = None
        m = float(scale) if scale is not None else 2.0 / float(cell[0])
    iy = nearest_index(coords[:, 0], h)
    ix = nearest_index(coords[:, 1], w)
    near = torch.stack(
        [-1.0 + (2.0 * iy.float() + 1.0) / h, -1.0 + (2.0 * ix.float() + 1.0) / w],
        dim=1,
    )
    return CoordSet(
        hr_coords=coords,
        nearest_lr=near,
        nearest_idx=torch.stack([iy, ix], dim=1),
        local_grid=coords - near,
        cell=cell,
        scale=m,
        hr_dims=hr_dims,
    )


def ensemble_weights(xq: torch.Tensor, lr_dims):
    """Four-corner local-ensemble geometry for each query coordinate.

    Returns (offsets, weights, gather_idx):
      offsets   N x 4 x 2  query minus corner position, corner order
                (top-left, top-right, bottom-left, bottom-right)
      weights   N x 4      area of the rectangle between the query and the
                corner diagonally opposite, normalized to sum to 1
      gather_idx N x 4 x 2 clamped (iy, ix) indices for feature lookup

    Corner positions are computed unclamped so the four areas always tile the
    enclosing LR cell exactly; queries outside [-1,1] are clamped first.
    """
    h, w = lr_dims
    xq = xq.clamp(-1.0, 1.0)
    # index of the corner at or above/left of the query, may be -1 at borders
    iy0 = torch.floor((xq[:, 0] + 1.0) * h / 2.0 - 0.5).long()
    ix0 = torch.floor((xq[:, 1] + 1.0) * w / 2.0 - 0.5).long()
    dtype = xq.dtype
    corners = []
    gather = []
    for dy in (0, 1):
        for dx in (0, 1):
            cy = -1.0 + (2.0 * (iy0 + dy).to(dtype) + 1.0) / h
            cx = -1.0 + (2.0 * (ix0 + dx).to(dtype) + 1.0) / w
            corners.append(torch.stack([cy, cx], dim=1))
            gather.append(
                torch.stack(
                    [(iy0 + dy).clamp(0, h - 1), (ix0 + dx).clamp(0, w - 1)], dim=1
                )
            )
    corners = torch.stack(corners, dim=1)  # N x 4 x 2
    gather_idx = torch.stack(gather, dim=1)
    offsets = xq.unsqueeze(1) - corners
    # weight of corner t is the area spanned to the diagonally opposite corner
    diag = offsets[:, [3, 2, 1, 0], :]
    areas = diag.abs().prod(dim=2)
    total = areas.sum(dim=1, keepdim=True)
    weights = areas / total
    return offsets, weights, gather_idx
