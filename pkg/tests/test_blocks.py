"""Attention blocks against brute-force references, plus their invariants."""
import numpy as np
import pytest

from hybridsr import ops
from hybridsr.dynamic_local import (
    DynamicLocalBlock,
    GatedFFN,
    WindowedSpatialBlock,
    dynamic_local_aggregate,
)
from hybridsr.errors import ConfigError, DimensionError, UsageError
from hybridsr.sparse_global import SparseChannelBlock, channel_attention, tiled_forward
from hybridsr.tensor import Tensor, clear_graph, no_grad

from reference import ref_channel_attention, ref_dynamic_aggregate, ref_gated_ffn

TOL32 = 1e-5
TOL64 = 1e-9


class TestDynamicAggregate:
    @pytest.mark.parametrize("dtype,tol", [(np.float32, TOL32), (np.float64, TOL64)])
    def test_matches_reference(self, rng, dtype, tol):
        for _ in range(8):
            heads = int(rng.integers(1, 4))
            cg = int(rng.integers(1, 4))
            k = int(rng.choice([1, 3, 5]))
            n, h, w = (int(v) for v in rng.integers(1, 5, size=3))
            x = rng.standard_normal((n, heads * cg, h, w)).astype(dtype)
            kern = rng.standard_normal((n, heads, k * k, h, w)).astype(dtype)
            got = dynamic_local_aggregate(Tensor(x), Tensor(kern)).data
            want = ref_dynamic_aggregate(x, kern)
            assert np.abs(got - want).max() < tol

    def test_shape_validation(self, rng):
        x = Tensor(rng.standard_normal((1, 4, 5, 5)))
        with pytest.raises(DimensionError):
            dynamic_local_aggregate(x, Tensor(rng.standard_normal((1, 2, 9, 4, 5))))
        with pytest.raises(DimensionError):
            dynamic_local_aggregate(x, Tensor(rng.standard_normal((1, 2, 8, 5, 5))))
        with pytest.raises(DimensionError):
            dynamic_local_aggregate(x, Tensor(rng.standard_normal((1, 3, 9, 5, 5))))

    def test_uniform_kernel_averages(self, rng):
        # a constant image under a sum-one kernel stays constant off-border
        x = Tensor(np.full((1, 2, 7, 7), 3.0))
        kern = Tensor(np.full((1, 1, 9, 7, 7), 1.0 / 9.0))
        out = dynamic_local_aggregate(x, kern).data
        np.testing.assert_allclose(out[:, :, 1:-1, 1:-1], 3.0, atol=1e-12)


class TestChannelAttention:
    @pytest.mark.parametrize("variant", ["relu", "softmax"])
    @pytest.mark.parametrize("dtype,tol", [(np.float32, TOL32), (np.float64, TOL64)])
    def test_matches_reference(self, rng, variant, dtype, tol):
        for _ in range(8):
            heads = int(rng.integers(1, 4))
            d = int(rng.integers(1, 5))
            n, h, w = (int(v) for v in rng.integers(1, 4, size=3))
            c = heads * d
            q, k, v = (rng.standard_normal((n, c, h, w)).astype(dtype) for _ in range(3))
            la = (rng.standard_normal(heads) * 0.5).astype(dtype)
            got = channel_attention(
                Tensor(q), Tensor(k), Tensor(v), Tensor(la), heads, variant
            ).data
            want = ref_channel_attention(q, k, v, la, heads, variant)
            assert np.abs(got - want).max() < tol

    def test_relu_gate_is_nonnegative(self, rng):
        # reconstruct the gate by feeding identity-like values
        for seed in range(10):
            r = np.random.default_rng(seed)
            q, k, v = (Tensor(r.standard_normal((1, 6, 4, 4))) for _ in range(3))
            la = Tensor(r.standard_normal(2) * 0.3)
            qd = q.data.reshape(2, 3, 16)
            kd = k.data.reshape(2, 3, 16)
            scores = np.einsum("hip,hjp->hij", qd, kd) / np.exp(la.data)[:, None, None]
            gate = np.maximum(scores, 0.0)
            assert gate.min() >= 0.0
            out = channel_attention(q, k, v, la, 2, "relu").data
            want = np.einsum(
                "hij,hjp->hip", gate, v.data.reshape(2, 3, 16)
            ).reshape(1, 6, 4, 4)
            np.testing.assert_allclose(out, want, atol=1e-10)

    def test_alpha_scales_scores(self, rng):
        q, k, v = (Tensor(rng.standard_normal((1, 4, 3, 3))) for _ in range(3))
        hot = channel_attention(q, k, v, Tensor(np.array([-2.0])), 1, "relu").data
        cold = channel_attention(q, k, v, Tensor(np.array([2.0])), 1, "relu").data
        # same sign pattern, exp(4) magnitude ratio
        np.testing.assert_allclose(hot, cold * np.exp(4.0), rtol=1e-6)

    def test_validation(self, rng):
        q = Tensor(rng.standard_normal((1, 4, 3, 3)))
        with pytest.raises(ConfigError):
            channel_attention(q, q, q, Tensor(np.zeros(2)), 2, "sigmoid")
        with pytest.raises(DimensionError):
            channel_attention(q, q, q, Tensor(np.zeros(3)), 2, "relu")
        with pytest.raises(DimensionError):
            channel_attention(q, q, q, Tensor(np.zeros(3)), 3, "relu")


class TestGatedFFN:
    @pytest.mark.parametrize("dtype,tol", [(np.float32, TOL32), (np.float64, TOL64)])
    def test_matches_reference(self, rng, dtype, tol):
        for trial in range(5):
            r = np.random.default_rng(100 + trial)
            c = int(r.integers(2, 6))
            ffn = GatedFFN(c, expansion=1.5, rng=r, dtype=dtype)
            # the projection initializes to zero (identity block); randomize it
            # so the oracle exercises the whole path
            ffn.project.w.data = (r.standard_normal(ffn.project.w.shape) * 0.3).astype(dtype)
            ffn.norm.gain.data = (1 + 0.2 * r.standard_normal(c)).astype(dtype)
            ffn.norm.offset.data = (0.1 * r.standard_normal(c)).astype(dtype)
            x = (r.standard_normal((2, c, 4, 3))).astype(dtype)
            with no_grad():
                got = ffn(Tensor(x)).data
            want = ref_gated_ffn(
                x,
                ffn.norm.gain.data, ffn.norm.offset.data, ffn.norm.eps,
                ffn.expand.w.data, ffn.expand.b.data,
                ffn.mix.w.data, ffn.mix.b.data,
                ffn.project.w.data, ffn.project.b.data,
            )
            assert np.abs(got - want).max() < tol

    def test_fresh_ffn_is_identity(self, rng):
        ffn = GatedFFN(6, expansion=2.66, rng=rng)
        x = Tensor(rng.standard_normal((1, 6, 5, 5)).astype(np.float32))
        with no_grad():
            out = ffn(x).data
        np.testing.assert_array_equal(out, x.data)

    def test_empty_hidden_rejected(self, rng):
        with pytest.raises(ConfigError):
            GatedFFN(1, expansion=0.2, rng=rng)


def _local_block(rng, c=12, heads=3, dtype=np.float32):
    return DynamicLocalBlock(c, heads=heads, kernel_size=3, squeeze_ratio=0.5,
                             ffn_expansion=2.0, rng=rng, dtype=dtype)


def _global_block(rng, c=12, heads=3, dtype=np.float32, variant="relu"):
    return SparseChannelBlock(c, heads=heads, ffn_expansion=2.0, rng=rng,
                              dtype=dtype, variant=variant)


class TestBlockInvariants:
    def test_fresh_blocks_are_identity(self, rng):
        x = Tensor(rng.standard_normal((2, 12, 6, 6)).astype(np.float32))
        for block in (_local_block(rng), _global_block(rng)):
            with no_grad():
                np.testing.assert_array_equal(block(x).data, x.data)

    def test_windowed_block_identity_and_divisibility(self, rng):
        blk = WindowedSpatialBlock(12, heads=3, ffn_expansion=2.0, rng=rng)
        x = Tensor(rng.standard_normal((1, 12, 8, 16)).astype(np.float32))
        with no_grad():
            np.testing.assert_array_equal(blk(x).data, x.data)
        bad = Tensor(rng.standard_normal((1, 12, 9, 16)).astype(np.float32))
        with pytest.raises(DimensionError):
            with no_grad():
                blk(bad)

    def test_local_block_config_errors(self, rng):
        with pytest.raises(ConfigError):
            _local_block(rng, c=10, heads=3)  # 10 % 3 != 0
        with pytest.raises(ConfigError):
            DynamicLocalBlock(10, heads=2, kernel_size=4, squeeze_ratio=0.5,
                              ffn_expansion=2.0, rng=rng)
        with pytest.raises(ConfigError):
            DynamicLocalBlock(5, heads=1, kernel_size=3, squeeze_ratio=0.5,
                              ffn_expansion=2.0, rng=rng)  # 2.5 channels

    def test_alpha_receives_gradient(self, rng):
        block = _global_block(rng, dtype=np.float64)
        # un-zero the projection so attention output reaches the loss
        block.project.w.data = rng.standard_normal(block.project.w.shape) * 0.3
        x = Tensor(rng.standard_normal((1, 12, 5, 5)))
        loss = ops.mean_all(ops.mul(block(x), block(x)))
        loss.backward()
        assert block.log_alpha.grad is not None
        assert np.abs(block.log_alpha.grad).max() > 0


class TestTiledForward:
    def _trained_block(self, rng, variant="relu"):
        block = _global_block(rng, variant=variant)
        block.project.w.data = rng.standard_normal(block.project.w.shape).astype(
            np.float32) * 0.2
        return block

    def test_single_tile_is_exact(self, rng):
        block = self._trained_block(rng)
        x = Tensor(rng.standard_normal((1, 12, 8, 8)).astype(np.float32))
        with no_grad():
            whole = block(x).data
            tiled = tiled_forward(block, x, win=8).data
            shrunk = tiled_forward(block, x, win=64).data  # window > image
        np.testing.assert_array_equal(tiled, whole)
        np.testing.assert_array_equal(shrunk, whole)

    def test_tiling_changes_global_statistics(self, rng):
        block = self._trained_block(rng)
        x = Tensor(rng.standard_normal((1, 12, 16, 16)).astype(np.float32))
        with no_grad():
            whole = block(x).data
            tiled = tiled_forward(block, x, win=8).data
        assert not np.allclose(whole, tiled), "tiles must see local statistics"

    def test_interior_tile_matches_direct_run(self, rng):
        # a non-overlapped tile's output equals running the block on that crop
        block = self._trained_block(rng)
        x = Tensor(rng.standard_normal((1, 12, 16, 16)).astype(np.float32))
        with no_grad():
            tiled = tiled_forward(block, x, win=8).data
            crop = block(Tensor(x.data[:, :, :8, :8])).data
        np.testing.assert_allclose(tiled[:, :, :8, :8], crop, atol=1e-6)

    def test_border_anchoring_covers_everything(self, rng):
        block = self._trained_block(rng)
        x = Tensor(rng.standard_normal((1, 12, 13, 11)).astype(np.float32))
        with no_grad():
            out = tiled_forward(block, x, win=8).data
        assert out.shape == x.data.shape
        assert np.all(np.isfinite(out))

    def test_grad_mode_rejected(self, rng):
        block = self._trained_block(rng)
        x = Tensor(rng.standard_normal((1, 12, 16, 16)), requires_grad=True)
        with pytest.raises(UsageError):
            tiled_forward(block, x, win=8)

    def test_bad_window_rejected(self, rng):
        block = self._trained_block(rng)
        x = Tensor(rng.standard_normal((1, 12, 8, 8)))
        with pytest.raises(ConfigError):
            tiled_forward(block, x, win=0)
