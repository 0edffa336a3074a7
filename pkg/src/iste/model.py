"""Full dual-branch model assembly: encoder, pixel branch (windowed
attention + texture fusion), texture branch (sinusoidal texture features),
and the two local decoders, with ablation switches for each head.

The pixel decoder evaluates its MLP four times per query -- once per
surrounding LR cell corner, on (fused feature, query-minus-corner offset,
cell size) -- and area-weights the results. The texture decoder depends on
neither the corner nor the offset, so its four-term form collapses to a
single evaluation.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import torch
import torch.nn as nn

from .coords import CoordSet, ensemble_weights, make_coord_set
from .encoder import Encoder, EncoderConfig
from .errors import ConfigError
from .lfi import LocalFeatureInteractor
from .nn_core import Mlp, ParamStore, check_finite, config_hash, init_parameters
from .stf import DEFAULT_BLOCK, SelfTextureFusion, sample_nearest
from .texture_learner import TextureLearner

VARIANTS = ("full", "no-lfi", "no-stf", "no-ltd")

MIN_SCALE, MAX_SCALE = 1.0, 12.0


@dataclass
class ModelConfig:
    use_lfi: bool = True
    use_stf: bool = True
    use_ltd: bool = True
    channels: int = 64
    n_blocks: int = 4
    attn_dim: int = 64
    texture_channels: int = 256
    fusion_dim: int = 256
    phase_hidden: int = 128
    lpd_hidden: list = field(default_factory=lambda: [256, 256, 256])
    ltd_hidden: list = field(default_factory=lambda: [256])
    block_size: int = DEFAULT_BLOCK
    seed: int = 0

    @classmethod
    def for_variant(cls, variant: str, **kwargs) -> "ModelConfig":
        if variant not in VARIANTS:
            raise ConfigError(
                f"unknown variant {variant!r}; valid: {', '.join(VARIANTS)}"
            )
        flags = {
            "use_lfi": variant != "no-lfi",
            "use_stf": variant != "no-stf",
            "use_ltd": variant != "no-ltd",
        }
        return cls(**{**flags, **kwargs})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)

    def hash(self) -> str:
        return config_hash(self.to_dict())


class IsteModel(nn.Module):
    def __init__(self, config: ModelConfig | None = None):
        super().__init__()
        cfg = config or ModelConfig()
        self.config = cfg
        self.encoder = Encoder(EncoderConfig(channels=cfg.channels, n_blocks=cfg.n_blocks))
        self.lfi = (
            LocalFeatureInteractor(cfg.channels, cfg.attn_dim) if cfg.use_lfi else None
        )
        needs_texture = cfg.use_stf or cfg.use_ltd
        self.texture_learner = (
            TextureLearner(cfg.channels, cfg.texture_channels, cfg.phase_hidden)
            if needs_texture
            else None
        )
        self.pixel_lift = nn.Linear(cfg.channels, cfg.fusion_dim)
        self.stf = SelfTextureFusion(cfg.fusion_dim) if cfg.use_stf else None
        self.f_theta = Mlp([cfg.fusion_dim + 4] + list(cfg.lpd_hidden) + [3])
        self.g_phi = (
            Mlp([cfg.texture_channels] + list(cfg.ltd_hidden) + [3])
            if cfg.use_ltd
            else None
        )
        init_parameters(self, cfg.seed)
        if self.lfi is not None:
            # zero value projections start the attention branch at exactly
            # zero contribution; training grows it from the plain-encoder
            # baseline instead of fighting an initially destructive mixing
            with torch.no_grad():
                for proj in self.lfi.v_projs:
                    proj.weight.zero_()
                    proj.bias.zero_()

    # -- decoders ---------------------------------------------------------

    def lpd_decode(self, fused: torch.Tensor, coord_set: CoordSet, lr_dims) -> torch.Tensor:
        """Four-corner area-weighted pixel decoding, N x 3."""
        offsets, weights, _ = ensemble_weights(coord_set.hr_coords.to(fused.dtype), lr_dims)
        cell = coord_set.cell.to(fused.dtype).expand(fused.shape[0], 2)
        out = 0.0
        for t in range(4):
            inp = torch.cat([fused, offsets[:, t, :], cell], dim=1)
            out = out + weights[:, t : t + 1] * self.f_theta(inp)
        return out

    def ltd_decode(self, texture: torch.Tensor, coord_set: CoordSet) -> torch.Tensor:
        """Texture decoding; the four-term form collapses to one evaluation
        because the term is corner-independent and the weights sum to 1."""
        return self.g_phi(texture)

    # -- forward ----------------------------------------------------------

    def forward(self, image: torch.Tensor, coord_set: CoordSet) -> torch.Tensor:
        """LR image (3,H,W) in [0,1] + query coordinates -> N x 3 RGB."""
        cfg = self.config
        lr_dims = image.shape[-2:]
        f_lr = self.encoder(image)
        # residual composition keeps the encoder features intact while the
        # attention output learns what to add
        f_pix = f_lr + self.lfi(f_lr) if cfg.use_lfi else f_lr
        f_tl = None
        if self.texture_learner is not None:
            f_tl = self.texture_learner(f_lr, coord_set)
        q = self.pixel_lift(sample_nearest(f_pix, coord_set.nearest_idx))
        if cfg.use_stf:
            fused, self.last_retrieval = self.stf(q, f_tl, f_tl, cfg.block_size)
        else:
            fused, self.last_retrieval = q, None
        pred = self.lpd_decode(fused, coord_set, lr_dims)
        if cfg.use_ltd:
            pred = pred + self.ltd_decode(f_tl, coord_set)
        check_finite(pred, "forward")
        return pred

    def predict_image(self, image: torch.Tensor, scale: float) -> torch.Tensor:
        """Full-grid inference: (3,H,W) in [0,1] -> (3, round(m*H), round(m*W))
        clamped to [0,1]. Queries run in blocks in tile (row-major) order."""
        if not (MIN_SCALE <= scale <= MAX_SCALE):
            raise ConfigError(
                f"scale {scale} outside supported range [{MIN_SCALE}, {MAX_SCALE}]"
            )
        h, w = image.shape[-2:]
        cs = make_coord_set((h, w), scale=scale)
        mh, mw = cs.hr_dims
        with torch.no_grad():
            f_lr = self.encoder(image)
            f_pix = f_lr + self.lfi(f_lr) if self.config.use_lfi else f_lr
            maps = (
                self.texture_learner.compute_maps(f_lr)
                if self.texture_learner is not None
                else None
            )
            out = torch.empty(mh * mw, 3, dtype=image.dtype)
            block = self.config.block_size
            for start in range(0, mh * mw, block):
                stop = min(start + block, mh * mw)
                sub = CoordSet(
                    cs.hr_coords[start:stop],
                    cs.nearest_lr[start:stop],
                    cs.nearest_idx[start:stop],
                    cs.local_grid[start:stop],
                    cs.cell,
                    cs.scale,
                )
                f_tl = (
                    self.texture_learner.features(maps, sub)
                    if maps is not None
                    else None
                )
                q = self.pixel_lift(sample_nearest(f_pix, sub.nearest_idx))
                if self.config.use_stf:
                    fused, _ = self.stf(q, f_tl, f_tl, block)
                else:
                    fused = q
                pred = self.lpd_decode(fused, sub, (h, w))
                if self.config.use_ltd:
                    pred = pred + self.ltd_decode(f_tl, sub)
                out[start:stop] = pred
        check_finite(out, "predict_image")
        return out.t().reshape(3, mh, mw).clamp(0.0, 1.0)

    # -- bookkeeping ------------------------------------------------------

    def param_store(self) -> ParamStore:
        return ParamStore(self, self.config.seed)

    def n_params(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_model(config: ModelConfig) -> IsteModel:
    return IsteModel(config)


def load_model(checkpoint_path) -> IsteModel:
    """Reconstruct a model from a checkpoint's embedded config."""
    from .nn_core import load_checkpoint, restore_into

    state, cfg_dict, seed = load_checkpoint(checkpoint_path)
    model = IsteModel(ModelConfig.from_dict(cfg_dict))
    restore_into(model.param_store(), state)
    model.eval()
    return model
