"""Autodiff tape mechanics and the binary tensor format."""
import numpy as np
import pytest

from hybridsr import ops
from hybridsr.errors import DimensionError, UsageError
from hybridsr.tensor import (
    Tensor,
    clear_graph,
    graph_size,
    no_grad,
    parameter,
    read_array,
    roundtrip_equal,
    write_array,
)


class TestTensorBasics:
    def test_leaf_has_no_parents(self):
        t = Tensor(np.ones((2, 3)))
        assert t.op == "leaf"
        assert t.grad is None
        assert not t.requires_grad

    def test_parameter_requires_grad(self, rng):
        p = parameter(rng.standard_normal((4,)), dtype=np.float32)
        assert p.requires_grad
        assert p.data.dtype == np.float32

    def test_ops_record_only_when_needed(self):
        a = Tensor(np.ones(3))
        b = Tensor(np.ones(3))
        ops.add(a, b)
        assert graph_size() == 0, "no grad-requiring parent, nothing to record"
        c = parameter(np.ones(3))
        ops.add(a, c)
        assert graph_size() == 1

    def test_no_grad_suppresses_recording(self):
        c = parameter(np.ones(3))
        with no_grad():
            out = ops.add(c, c)
        assert graph_size() == 0
        assert out.grad is None


class TestBackward:
    def test_simple_chain(self):
        x = parameter(np.array([2.0, -3.0]))
        loss = ops.sum_all(ops.mul(x, x))
        loss.backward()
        np.testing.assert_allclose(x.grad, [4.0, -6.0])

    def test_backward_requires_scalar(self):
        x = parameter(np.ones(3))
        y = ops.mul(x, x)
        with pytest.raises(UsageError):
            y.backward()

    def test_leaf_grads_accumulate_across_calls(self):
        x = parameter(np.array([1.5]))
        for expected in (3.0, 6.0):
            clear_graph()
            loss = ops.sum_all(ops.mul(x, x))
            loss.backward()
            np.testing.assert_allclose(x.grad, [expected])

    def test_intermediate_grads_reset_within_tape(self):
        # two backward calls on the same tape must not double intermediate grads
        x = parameter(np.array([2.0]))
        y = ops.mul(x, x)
        loss = ops.sum_all(y)
        loss.backward()
        first = x.grad.copy()
        loss.backward()
        np.testing.assert_allclose(x.grad, 2 * first)

    def test_grad_shape_mismatch_rejected(self):
        x = parameter(np.ones((2, 2)))
        with pytest.raises(DimensionError):
            x.accumulate_grad(np.ones(3))


def _roundtrip(arr: np.ndarray) -> np.ndarray:
    import io

    buf = io.BytesIO()
    write_array(buf, arr)
    buf.seek(0)
    return read_array(buf)


class TestSerialization:
    def test_roundtrip_f32_f64(self, tmp_path, rng):
        for dtype in (np.float32, np.float64):
            arr = rng.standard_normal((3, 4, 5)).astype(dtype)
            path = tmp_path / f"{np.dtype(dtype).name}.dlgt"
            with open(path, "wb") as fp:
                write_array(fp, arr)
            with open(path, "rb") as fp:
                back = read_array(fp)
            assert roundtrip_equal(back, arr)

    def test_zero_dim_and_empty(self):
        for arr in (np.float32(3.5).reshape(()), np.zeros((0, 4), np.float64)):
            assert roundtrip_equal(_roundtrip(arr), arr)

    def test_truncated_stream_rejected(self, tmp_path, rng):
        import io

        buf = io.BytesIO()
        write_array(buf, rng.standard_normal((4, 4)))
        blob = buf.getvalue()
        with pytest.raises(Exception):
            read_array(io.BytesIO(blob[: len(blob) // 2]))

    def test_bad_magic_rejected(self):
        import io

        with pytest.raises(Exception):
            read_array(io.BytesIO(b"NOPE" + b"\x00" * 32))
