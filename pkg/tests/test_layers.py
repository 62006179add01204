"""Module reflection, initialization, and parameter registry semantics."""
import numpy as np
import pytest

from hybridsr.errors import ConfigError, DimensionError
from hybridsr.layers import Conv2d, DepthwiseConv2d, LayerNorm, Module, fanin_uniform, trunc_normal
from hybridsr.tensor import Tensor, no_grad


class TestInit:
    def test_trunc_normal_bounds_and_spread(self, rng):
        vals = trunc_normal(rng, (4000,), std=0.02)
        assert np.abs(vals).max() <= 2 * 0.02 + 1e-12
        assert 0.01 < vals.std() < 0.03

    def test_fanin_uniform_bound(self, rng):
        w = fanin_uniform(rng, (8, 4, 3, 3), fan_in=4 * 9)
        bound = 1.0 / np.sqrt(4 * 9)
        assert np.abs(w).max() <= bound
        assert np.abs(w).max() > bound * 0.8  # actually fills the range

    def test_conv_zero_init(self, rng):
        conv = Conv2d(4, 6, 3, rng, init="zeros")
        assert not conv.w.data.any()
        assert not conv.b.data.any()

    def test_conv_auto_init_differs_by_kernel(self, rng):
        point = Conv2d(16, 16, 1, np.random.default_rng(0))
        spatial = Conv2d(16, 16, 3, np.random.default_rng(0))
        # pointwise uses the tight trunc-normal, spatial the fan-in band
        assert point.w.data.std() < spatial.w.data.std()


class _Stack(Module):
    def __init__(self, rng):
        self.first = Conv2d(3, 4, 3, rng)
        self.norm = LayerNorm(4)
        self.tail = [Conv2d(4, 4, 1, rng), Conv2d(4, 3, 1, rng)]

    def forward(self, x):
        x = self.first(x)
        x = self.norm(x)
        for layer in self.tail:
            x = layer(x)
        return x


class TestModule:
    def test_named_params_are_stable_and_complete(self, rng):
        m = _Stack(rng)
        names = [n for n, _ in m.named_params()]
        assert len(names) == len(set(names)), "duplicate parameter names"
        assert names == [n for n, _ in _Stack(np.random.default_rng(7)).named_params()]
        assert any(n.startswith("first.") for n in names)
        assert any(n.startswith("tail.1.") for n in names)
        assert len(names) == 8  # 3 convs * (w, b) + norm gain/offset

    def test_param_count_matches_manual_sum(self, rng):
        m = _Stack(rng)
        total = sum(p.data.size for _, p in m.named_params())
        assert m.param_count() == total

    def test_zero_grads(self, rng):
        m = _Stack(rng)
        for _, p in m.named_params():
            p.grad = np.ones_like(p.data)
        m.zero_grads()
        assert all(p.grad is None for _, p in m.named_params())

    def test_export_load_roundtrip(self, rng):
        m1 = _Stack(np.random.default_rng(1))
        m2 = _Stack(np.random.default_rng(2))
        arrays = m1.export_arrays()
        m2.load_arrays(arrays)
        for (n1, p1), (n2, p2) in zip(m1.named_params(), m2.named_params()):
            assert n1 == n2
            assert np.array_equal(p1.data, p2.data)

    def test_load_rejects_missing_and_extra(self, rng):
        m = _Stack(rng)
        arrays = m.export_arrays()
        arrays.pop("first.w")
        with pytest.raises(ConfigError):
            m.load_arrays(arrays)
        arrays = m.export_arrays()
        arrays["ghost"] = np.zeros(3)
        with pytest.raises(ConfigError):
            m.load_arrays(arrays)

    def test_load_rejects_shape_clash(self, rng):
        m = _Stack(rng)
        arrays = m.export_arrays()
        arrays["first.w"] = np.zeros((2, 2))
        with pytest.raises((ConfigError, DimensionError)):
            m.load_arrays(arrays)

    def test_label_modules_tags_op_names(self, rng):
        m = _Stack(rng)
        m.label_modules()
        x = Tensor(rng.standard_normal((1, 3, 6, 6)).astype(np.float32),
                   requires_grad=True)
        out = m(x)
        assert "@tail.1" in out.op, f"expected layer tag in op name, got {out.op!r}"

    def test_same_size_conv_keeps_spatial_dims(self, rng):
        conv = Conv2d(3, 5, 3, rng)
        dw = DepthwiseConv2d(3, 7, rng)
        x = Tensor(rng.standard_normal((2, 3, 9, 11)).astype(np.float32))
        with no_grad():
            assert conv(x).data.shape == (2, 5, 9, 11)
            assert dw(x).data.shape == (2, 3, 9, 11)
