import numpy as np
import pytest
import torch

from iste.nn_core import gradient_check, init_parameters
from iste.stf import (
    RetrievalResult,
    SelfTextureFusion,
    retrieve,
    sample_nearest,
    similarity_matrix,
)


class TestSimilarityMatrix:
    def test_same_direction_is_one(self):
        q = torch.tensor([[1.0, 2.0, 3.0]])
        k = 4.0 * q
        assert abs(similarity_matrix(q, k)[0, 0].item() - 1.0) < 1e-6

    def test_orthogonal_is_zero(self):
        q = torch.tensor([[1.0, 0.0]])
        k = torch.tensor([[0.0, 5.0]])
        assert abs(similarity_matrix(q, k)[0, 0].item()) < 1e-7

    def test_brute_force_oracle(self, rng):
        q = torch.randn(4, 3, generator=rng)
        k = torch.randn(4, 3, generator=rng)
        r = similarity_matrix(q, k)
        for i in range(4):
            for j in range(4):
                qi = q[i] / q[i].norm()
                kj = k[j] / k[j].norm()
                assert abs(r[i, j].item() - float(qi @ kj)) < 1e-6

    def test_entries_bounded(self, rng):
        r = similarity_matrix(torch.randn(10, 5, generator=rng), torch.randn(10, 5, generator=rng))
        assert r.min() >= -1.0 - 1e-6 and r.max() <= 1.0 + 1e-6

    def test_zero_norm_guarded(self):
        q = torch.zeros(2, 3)
        k = torch.randn(2, 3)
        r = similarity_matrix(q, k)
        assert torch.isfinite(r).all()


class TestRetrieve:
    def test_tie_breaks_to_lowest_index(self):
        r = torch.tensor([[0.1, 0.9, 0.9]])
        v = torch.arange(9.0).reshape(3, 3)
        res = retrieve(r, v)
        assert res.index_map.item() == 1
        assert res.confidence.item() == r[0, 1].item()
        assert torch.equal(res.retrieved[0], v[1])

    def test_diagonal_dominant(self):
        r = torch.eye(4) * 0.8 + 0.05
        v = torch.randn(4, 6)
        res = retrieve(r, v)
        assert res.index_map.tolist() == [0, 1, 2, 3]
        assert torch.allclose(res.confidence, torch.full((4,), 0.85))
        assert torch.equal(res.retrieved, v)

    def test_brute_force_exact(self, rng):
        r = torch.randn(8, 8, generator=rng)
        v = torch.randn(8, 5, generator=rng)
        res = retrieve(r, v)
        rn = r.numpy()
        for i in range(8):
            j = int(np.argmax(rn[i]))
            assert res.index_map[i].item() == j
            assert res.confidence[i].item() == rn[i, j]
            assert torch.equal(res.retrieved[i], v[j])

    def test_confidence_equals_row_at_index(self, rng):
        r = torch.randn(6, 6, generator=rng)
        res = retrieve(r, torch.randn(6, 4, generator=rng))
        for i in range(6):
            assert res.confidence[i] == r[i, res.index_map[i]]


class TestFuse:
    def make(self, dim=4, seed=0):
        stf = SelfTextureFusion(fusion_dim=dim, hidden=6)
        init_parameters(stf, seed)
        return stf

    def test_zero_confidence_returns_query(self, rng):
        stf = self.make()
        q = torch.randn(5, 4, generator=rng)
        res = RetrievalResult(
            index_map=torch.zeros(5, dtype=torch.long),
            confidence=torch.zeros(5),
            retrieved=torch.randn(5, 4, generator=rng),
        )
        assert torch.equal(stf.fuse(q, res), q)

    def test_zero_mlp_weights_bias_gating(self, rng):
        stf = self.make()
        with torch.no_grad():
            for layer in stf.fuse_mlp.layers:
                layer.weight.zero_()
                layer.bias.zero_()
            stf.fuse_mlp.layers[-1].bias.copy_(torch.tensor([1.0, 2.0, 3.0, 4.0]))
        q = torch.randn(3, 4, generator=rng)
        s = torch.tensor([0.5, -0.2, 0.0])
        res = RetrievalResult(
            index_map=torch.zeros(3, dtype=torch.long),
            confidence=s,
            retrieved=torch.randn(3, 4, generator=rng),
        )
        expected = q + torch.tensor([1.0, 2.0, 3.0, 4.0]) * s.unsqueeze(1)
        assert torch.allclose(stf.fuse(q, res), expected, atol=1e-6)

    def test_formula_oracle(self, rng):
        stf = self.make(seed=3)
        q = torch.randn(4, 4, generator=rng)
        a = torch.randn(4, 4, generator=rng)
        s = torch.rand(4, generator=rng)
        res = RetrievalResult(
            index_map=torch.zeros(4, dtype=torch.long), confidence=s, retrieved=a
        )
        out = stf.fuse(q, res)
        z = stf.fuse_mlp(torch.cat([q, a], dim=1))
        expected = q + z * s.unsqueeze(1)
        assert torch.allclose(out, expected, atol=1e-6)

    def test_gating_linear_in_confidence(self, rng):
        stf = self.make(seed=5)
        q = torch.randn(6, 4, generator=rng)
        a = torch.randn(6, 4, generator=rng)
        norms = []
        for eps in (1e-1, 1e-2, 1e-3):
            res = RetrievalResult(
                index_map=torch.zeros(6, dtype=torch.long),
                confidence=torch.full((6,), eps),
                retrieved=a,
            )
            norms.append(float((stf.fuse(q, res) - q).norm().detach()))
        assert norms[1] == pytest.approx(norms[0] / 10, rel=1e-4)
        assert norms[2] == pytest.approx(norms[0] / 100, rel=1e-4)


class TestForward:
    def make(self, dim=4, seed=1):
        stf = SelfTextureFusion(fusion_dim=dim, hidden=6)
        init_parameters(stf, seed)
        return stf

    def test_single_element(self):
        stf = self.make()
        q = torch.tensor([[1.0, 0.0, 0.0, 0.0]])
        k = torch.tensor([[2.0, 0.0, 0.0, 0.0]])  # parallel to q
        out, res = stf(q, k, k)
        assert res.index_map.item() == 0
        assert abs(res.confidence.item() - 1.0) < 1e-6

    def test_empty_input(self):
        stf = self.make()
        out, res = stf(torch.zeros(0, 4), torch.zeros(0, 4), torch.zeros(0, 4))
        assert out.shape == (0, 4)
        assert res.index_map.numel() == 0

    def test_duplicate_queries_identical_retrieval(self, rng):
        stf = self.make()
        q1 = torch.randn(1, 4, generator=rng).repeat(6, 1)
        k = torch.randn(6, 4, generator=rng)
        _, res = stf(q1, k, k)
        assert (res.index_map == res.index_map[0]).all()

    def test_blocked_equals_global_when_block_covers(self, rng):
        stf = self.make(seed=7)
        q = torch.randn(48, 4, generator=rng)
        k = torch.randn(48, 4, generator=rng)
        v = torch.randn(48, 4, generator=rng)
        out_a, res_a = stf(q, k, v, block=48)
        out_b, res_b = stf(q, k, v, block=1000)
        # independent unblocked oracle
        r = similarity_matrix(q, k)
        res_o = retrieve(r, v)
        expected = stf.fuse(q, res_o)
        assert torch.equal(out_a, out_b)
        assert torch.equal(res_a.index_map, res_b.index_map)
        assert torch.allclose(out_a, expected, atol=1e-6)

    def test_blocked_restricts_to_blocks(self, rng):
        stf = self.make()
        q = torch.randn(8, 4, generator=rng)
        k = torch.randn(8, 4, generator=rng)
        _, res = stf(q, k, k, block=4)
        assert (res.index_map[:4] < 4).all()
        assert (res.index_map[4:] >= 4).all()

    def test_positive_key_scaling_invariance(self, rng):
        stf = self.make()
        q = torch.randn(16, 4, generator=rng)
        k = torch.randn(16, 4, generator=rng)
        _, res_a = stf(q, k, k, block=16)
        _, res_b = stf(q, 3.7 * k, k, block=16)
        assert torch.equal(res_a.index_map, res_b.index_map)
        assert torch.allclose(res_a.confidence, res_b.confidence, atol=1e-6)

    def test_gradient_check_argmax_frozen(self):
        stf = SelfTextureFusion(fusion_dim=3, hidden=4).double()
        init_parameters(stf, 11)
        q = torch.randn(5, 3, dtype=torch.float64)
        k = torch.randn(5, 3, dtype=torch.float64)

        def loss_fn():
            out, _ = stf(q, k, k, block=5)
            return (out ** 2).sum()

        assert gradient_check(loss_fn, stf.parameters(), samples_per_tensor=4) < 1e-4


def test_sample_nearest_gather_oracle(rng):
    feat = torch.randn(3, 4, 5, generator=rng)
    idx = torch.tensor([[0, 0], [3, 4], [1, 2]])
    out = sample_nearest(feat, idx)
    for n, (iy, ix) in enumerate(idx.tolist()):
        assert torch.equal(out[n], feat[:, iy, ix])
