"""Self-Texture Fusion: cosine-similarity retrieval of the best-matching
texture feature for each pixel-feature query, fused with confidence gating.

Retrieval is restricted to contiguous blocks of the query/key sequence
(training batches sample coordinates in blocks; inference tiles likewise), a
memory bound that reduces to global retrieval whenever the block covers the
whole set. The argmax index is non-differentiable; gradients flow through the
gathered value and the fusion MLP, while the confidence scalar is detached.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .nn_core import Mlp, check_finite

NORM_EPS = 1e-8

DEFAULT_BLOCK = 2304  # 48^2, the training-batch granularity


@dataclass
class RetrievalResult:
    index_map: torch.Tensor  # N long, argmax key index per query
    confidence: torch.Tensor  # N, max cosine similarity in [-1, 1]
    retrieved: torch.Tensor  # N x D, value rows gathered at index_map


def similarity_matrix(q: torch.Tensor, k: torch.Tensor) -> torch.Tensor:
    """Pairwise cosine similarities, rows q against rows k; norms clamped to
    NORM_EPS so zero vectors never divide by zero."""
    qn = q / q.norm(dim=1, keepdim=True).clamp_min(NORM_EPS)
    kn = k / k.norm(dim=1, keepdim=True).clamp_min(NORM_EPS)
    return qn @ kn.t()


def retrieve(r: torch.Tensor, v: torch.Tensor) -> RetrievalResult:
    """Argmax retrieval per row; ties break to the lowest index."""
    conf, idx = r.max(dim=1)
    return RetrievalResult(index_map=idx, confidence=conf, retrieved=v[idx])


class SelfTextureFusion(nn.Module):
    """Fusion head: z = MLP(concat(q, a)); out = q + z * confidence.

    Queries arrive already lifted to the fusion width (the 64->256 lift
    belongs to the pixel branch so ablating fusion keeps it available).
    """

    def __init__(self, fusion_dim=256, hidden=256):
        super().__init__()
        self.fusion_dim = fusion_dim
        self.fuse_mlp = Mlp([2 * fusion_dim, hidden, fusion_dim])

    def fuse(self, q: torch.Tensor, result: RetrievalResult) -> torch.Tensor:
        z = self.fuse_mlp(torch.cat([q, result.retrieved], dim=1))
        return q + z * result.confidence.detach().unsqueeze(1)

    def forward(self, q, keys, values, block: int = DEFAULT_BLOCK):
        """Blocked retrieval + fusion; q, keys, values are aligned N x D."""
        n = q.shape[0]
        if n == 0:
            return q, RetrievalResult(
                index_map=torch.zeros(0, dtype=torch.long),
                confidence=torch.zeros(0),
                retrieved=q,
            )
        outs, idxs, confs, gathered = [], [], [], []
        for start in range(0, n, block):
            stop = min(start + block, n)
            r = similarity_matrix(q[start:stop], keys[start:stop])
            res = retrieve(r, values[start:stop])
            outs.append(self.fuse(q[start:stop], res))
            idxs.append(res.index_map + start)
            confs.append(res.confidence)
            gathered.append(res.retrieved)
        out = torch.cat(outs, dim=0)
        check_finite(out, "stf")
        result = RetrievalResult(
            index_map=torch.cat(idxs),
            confidence=torch.cat(confs),
            retrieved=torch.cat(gathered, dim=0),
        )
        return out, result


def sample_nearest(feat: torch.Tensor, nearest_idx: torch.Tensor) -> torch.Tensor:
    """Gather a (C,H,W) map at (iy, ix) index pairs -> N x C."""
    c, h, w = feat.shape
    flat = nearest_idx[:, 0] * w + nearest_idx[:, 1]
    return feat.reshape(c, -1)[:, flat].t()
