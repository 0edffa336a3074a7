import pytest
import torch

from iste.coords import make_coord_set
from iste.errors import ConfigError
from iste.model import VARIANTS, IsteModel, ModelConfig, build_model, load_model
from iste.nn_core import save_checkpoint

from conftest import tiny_config


def tiny_model(**kwargs):
    return build_model(tiny_config(**kwargs))


class TestConfig:
    def test_variant_flags(self):
        assert ModelConfig.for_variant("full").use_lfi
        assert not ModelConfig.for_variant("no-lfi").use_lfi
        assert not ModelConfig.for_variant("no-stf").use_stf
        assert not ModelConfig.for_variant("no-ltd").use_ltd

    def test_unknown_variant_rejected(self):
        with pytest.raises(ConfigError):
            ModelConfig.for_variant("no-encoder")

    def test_round_trip_dict(self):
        cfg = tiny_config(seed=3)
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg

    def test_hash_sensitive_to_fields(self):
        assert tiny_config().hash() != tiny_config(channels=16).hash()
        assert tiny_config().hash() == tiny_config().hash()


class TestAblationStructure:
    def test_disabled_modules_absent(self):
        m = build_model(tiny_config(use_lfi=False, use_stf=False, use_ltd=False))
        assert m.lfi is None and m.stf is None and m.g_phi is None
        assert m.texture_learner is None

    def test_texture_learner_kept_for_either_branch(self):
        assert build_model(tiny_config(use_stf=False)).texture_learner is not None
        assert build_model(tiny_config(use_ltd=False)).texture_learner is not None

    @pytest.mark.parametrize("variant", ["no-lfi", "no-stf", "no-ltd"])
    def test_param_count_difference_is_module_size(self, variant):
        full = build_model(tiny_config())
        flag = {"no-lfi": "use_lfi", "no-stf": "use_stf", "no-ltd": "use_ltd"}[variant]
        ablated = build_model(tiny_config(**{flag: False}))
        removed = {
            "no-lfi": full.lfi,
            "no-stf": full.stf,
            "no-ltd": full.g_phi,
        }[variant]
        expected = sum(p.numel() for p in removed.parameters())
        assert full.n_params() - ablated.n_params() == expected

    def test_all_variants_forward(self):
        img = torch.rand(3, 8, 8)
        cs = make_coord_set((8, 8), scale=2.0)
        for variant in VARIANTS:
            cfg = ModelConfig.for_variant(variant, **{
                k: v for k, v in tiny_config().to_dict().items()
                if k not in ("use_lfi", "use_stf", "use_ltd")
            })
            out = build_model(cfg)(img, cs)
            assert out.shape == (len(cs), 3)
            assert torch.isfinite(out).all()


class TestForward:
    def test_output_shape(self):
        m = tiny_model()
        cs = make_coord_set((6, 6), scale=2.0)
        assert m(torch.rand(3, 6, 6), cs).shape == (144, 3)

    def test_deterministic(self):
        m = tiny_model(seed=9)
        img = torch.rand(3, 6, 6)
        cs = make_coord_set((6, 6), scale=1.5)
        assert torch.equal(m(img, cs), m(img, cs))

    def test_seed_reproducible_construction(self):
        a = tiny_model(seed=4)
        b = tiny_model(seed=4)
        img = torch.rand(3, 6, 6)
        cs = make_coord_set((6, 6), scale=2.0)
        assert torch.equal(a(img, cs), b(img, cs))

    def test_sum_of_branches(self):
        # the prediction is the pixel-decoder output plus the texture-decoder
        # output evaluated on the same intermediate features
        m = tiny_model(seed=2)
        img = torch.rand(3, 6, 6)
        cs = make_coord_set((6, 6), scale=2.0)
        total = m(img, cs)

        with torch.no_grad():
            f_lr = m.encoder(img)
            f_pix = f_lr + m.lfi(f_lr)
            f_tl = m.texture_learner(f_lr, cs)
            from iste.stf import sample_nearest

            q = m.pixel_lift(sample_nearest(f_pix, cs.nearest_idx))
            fused, _ = m.stf(q, f_tl, f_tl, m.config.block_size)
            lpd = m.lpd_decode(fused, cs, (6, 6))
            ltd = m.ltd_decode(f_tl, cs)
        assert torch.allclose(total, lpd + ltd, atol=1e-6)

    def test_last_retrieval_recorded(self):
        m = tiny_model()
        cs = make_coord_set((5, 5), scale=2.0)
        m(torch.rand(3, 5, 5), cs)
        assert m.last_retrieval is not None
        assert m.last_retrieval.index_map.shape == (len(cs),)

    def test_no_stf_skips_retrieval(self):
        m = build_model(tiny_config(use_stf=False))
        cs = make_coord_set((5, 5), scale=2.0)
        m(torch.rand(3, 5, 5), cs)
        assert m.last_retrieval is None


class TestPredictImage:
    @pytest.mark.parametrize("scale,dims", [(1.3, (10, 10)), (2.0, (16, 16)), (6.7, (54, 54))])
    def test_output_dims_round(self, scale, dims):
        m = tiny_model()
        out = m.predict_image(torch.rand(3, 8, 8), scale)
        assert out.shape == (3, *dims)
        assert torch.isfinite(out).all()

    def test_range_clamped(self):
        out = tiny_model().predict_image(torch.rand(3, 6, 6), 2.0)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_scale_out_of_range_rejected(self):
        m = tiny_model()
        with pytest.raises(ConfigError):
            m.predict_image(torch.rand(3, 6, 6), 0.5)
        with pytest.raises(ConfigError):
            m.predict_image(torch.rand(3, 6, 6), 12.5)

    def test_block_covering_grid_matches_oversized_block(self):
        # any block size that covers the whole query grid in one chunk
        # yields the same retrieval pool, hence the same prediction
        a = tiny_model(seed=1, block_size=1000)
        b = tiny_model(seed=1, block_size=144)
        img = torch.rand(3, 6, 6)
        out_a = a.predict_image(img, 2.0)  # 12x12 grid, 144 queries
        out_b = b.predict_image(img, 2.0)
        assert torch.allclose(out_a, out_b, atol=1e-6)

    def test_block_size_changes_retrieval_pool(self):
        a = tiny_model(seed=1, block_size=1000)
        b = tiny_model(seed=1, block_size=16)
        img = torch.rand(3, 6, 6)
        assert not torch.equal(a.predict_image(img, 2.0), b.predict_image(img, 2.0))

    def test_matches_forward_on_full_grid(self):
        m = tiny_model(seed=5, block_size=100_000)
        img = torch.rand(3, 5, 5)
        cs = make_coord_set((5, 5), scale=2.0)
        with torch.no_grad():
            flat = m(img, cs).clamp(0.0, 1.0)
        grid = m.predict_image(img, 2.0)
        assert torch.allclose(grid, flat.t().reshape(3, 10, 10), atol=1e-6)


class TestCheckpointing:
    def test_save_load_round_trip(self, tmp_path):
        m = tiny_model(seed=6)
        path = tmp_path / "model.ckpt"
        save_checkpoint(m.param_store(), m.config.to_dict(), path)
        loaded = load_model(path)
        img = torch.rand(3, 6, 6)
        cs = make_coord_set((6, 6), scale=2.0)
        with torch.no_grad():
            assert torch.equal(m(img, cs), loaded(img, cs))

    def test_loaded_config_matches(self, tmp_path):
        m = build_model(tiny_config(use_ltd=False, seed=2))
        path = tmp_path / "model.ckpt"
        save_checkpoint(m.param_store(), m.config.to_dict(), path)
        loaded = load_model(path)
        assert loaded.config == m.config
        assert loaded.g_phi is None
