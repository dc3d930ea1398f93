"""Forward-value contracts of the tensor ops and the binary format."""

import io

import numpy as np
import pytest

import hginet.tensor as T
from hginet.errors import ContractError, ShapeError, TensorFormatError

from oracles import bilinear_resize_direct, conv2d_direct, softmax_rows_direct


class TestElementwise:
    def test_add_broadcast_row(self):
        a = T.Tensor(np.arange(6.0).reshape(2, 3))
        b = T.Tensor(np.array([10.0, 20.0, 30.0]))
        np.testing.assert_array_equal((a + b).data, a.data + b.data)

    def test_scalar_operands(self):
        a = T.Tensor([1.0, 2.0])
        np.testing.assert_array_equal((2.0 * a - 1.0).data, [1.0, 3.0])
        np.testing.assert_array_equal((1.0 / a).data, [1.0, 0.5])

    def test_clip_interior_and_edges(self):
        a = T.Tensor([-1.0, 0.5, 2.0])
        np.testing.assert_array_equal(T.clip(a, 0.0, 1.0).data, [0.0, 0.5, 1.0])

    def test_sigmoid_extremes_stay_finite(self):
        a = T.Tensor([-1000.0, 0.0, 1000.0])
        y = T.sigmoid(a).data
        assert np.all(np.isfinite(y))
        np.testing.assert_allclose(y, [0.0, 0.5, 1.0], atol=1e-12)


class TestMatmul:
    def test_2d(self):
        rng = np.random.default_rng(0)
        a, b = rng.standard_normal((4, 5)), rng.standard_normal((5, 3))
        np.testing.assert_allclose(T.matmul(T.Tensor(a), T.Tensor(b)).data, a @ b, rtol=1e-15)

    def test_batched_same_leading(self):
        rng = np.random.default_rng(1)
        a, b = rng.standard_normal((6, 2, 4, 5)), rng.standard_normal((6, 2, 5, 3))
        np.testing.assert_allclose(T.matmul(T.Tensor(a), T.Tensor(b)).data, a @ b, rtol=1e-15)

    def test_inner_mismatch_raises(self):
        with pytest.raises(ShapeError):
            T.matmul(T.Tensor(np.ones((2, 3))), T.Tensor(np.ones((4, 2))))

    def test_rank1_rejected(self):
        with pytest.raises(ShapeError):
            T.matmul(T.Tensor(np.ones(3)), T.Tensor(np.ones((3, 2))))


class TestSoftmax:
    def test_pinned_example(self):
        # [0, ln 2] -> [1/3, 2/3]
        out = T.softmax_rows(T.Tensor([0.0, np.log(2.0)])).data
        np.testing.assert_allclose(out, [1.0 / 3.0, 2.0 / 3.0], atol=1e-15)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            x = rng.standard_normal((5, 7)) * rng.uniform(0.1, 50)
            s = T.softmax_rows(T.Tensor(x)).data
            np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-12)
            assert np.all(s >= 0.0)

    def test_shift_invariance(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((4, 6))
        a = T.softmax_rows(T.Tensor(x)).data
        b = T.softmax_rows(T.Tensor(x + 123.456)).data
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_matches_direct(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((3, 4, 5))
        np.testing.assert_allclose(T.softmax_rows(T.Tensor(x)).data, softmax_rows_direct(x), atol=1e-14)


class TestConv2d:
    def test_mean_kernel_constant_map(self):
        # all-ones/9 kernel on a constant map: interior keeps the constant,
        # borders scale by the valid coverage under zero padding
        c = 3.7
        x = np.full((1, 1, 5, 5), c)
        w = np.full((1, 1, 3, 3), 1.0 / 9.0)
        out = T.conv2d(T.Tensor(x), T.Tensor(w), padding=1).data
        np.testing.assert_allclose(out[0, 0, 1:-1, 1:-1], c, atol=1e-12)
        np.testing.assert_allclose(out[0, 0, 0, 0], c * 4.0 / 9.0, atol=1e-12)
        np.testing.assert_allclose(out[0, 0, 0, 2], c * 6.0 / 9.0, atol=1e-12)

    def test_stride2_halves_even_extents(self):
        x = np.zeros((1, 2, 8, 12))
        w = np.zeros((4, 2, 3, 3))
        out = T.conv2d(T.Tensor(x), T.Tensor(w), stride=2, padding=1)
        assert out.shape == (1, 4, 4, 6)

    def test_matches_direct(self):
        rng = np.random.default_rng(5)
        for stride, pad, k in [(1, 0, 1), (1, 1, 3), (2, 1, 3), (1, 2, 5), (2, 3, 7)]:
            x = rng.standard_normal((2, 3, 9, 8))
            w = rng.standard_normal((4, 3, k, k))
            b = rng.standard_normal(4)
            got = T.conv2d(T.Tensor(x), T.Tensor(w), T.Tensor(b), stride=stride, padding=pad).data
            np.testing.assert_allclose(got, conv2d_direct(x, w, b, stride, pad), atol=1e-12)

    def test_even_kernel_rejected(self):
        with pytest.raises(ContractError):
            T.conv2d(T.Tensor(np.zeros((1, 1, 4, 4))), T.Tensor(np.zeros((1, 1, 2, 2))))

    def test_oversized_kernel_rejected(self):
        with pytest.raises(ShapeError):
            T.conv2d(T.Tensor(np.zeros((1, 1, 3, 3))), T.Tensor(np.zeros((1, 1, 5, 5))), padding=0)

    def test_channel_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            T.conv2d(T.Tensor(np.zeros((1, 2, 5, 5))), T.Tensor(np.zeros((1, 3, 3, 3))))


class TestBilinearResize:
    def test_pinned_2x2_to_1x1(self):
        x = T.Tensor(np.array([[[0.0, 1.0], [2.0, 3.0]]]))
        out = T.bilinear_resize(x, 1, 1).data
        np.testing.assert_allclose(out, [[[1.5]]], atol=1e-15)

    def test_identity_same_size(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((2, 5, 7))
        out = T.bilinear_resize(T.Tensor(x), 5, 7).data
        np.testing.assert_array_equal(out, x)

    def test_matches_direct(self):
        rng = np.random.default_rng(7)
        for oh, ow in [(3, 3), (8, 5), (2, 9), (7, 7)]:
            x = rng.standard_normal((2, 4, 6))
            got = T.bilinear_resize(T.Tensor(x), oh, ow).data
            np.testing.assert_allclose(got, bilinear_resize_direct(x, oh, ow), atol=1e-12)

    def test_range_preserved(self):
        # interpolation is convex, so output stays within the input range
        rng = np.random.default_rng(8)
        x = rng.uniform(0.2, 0.9, (5, 6))
        out = T.bilinear_resize(T.Tensor(x), 11, 3).data
        assert out.min() >= x.min() - 1e-12 and out.max() <= x.max() + 1e-12


class TestPixelShuffle:
    def test_pinned_example(self):
        x = T.Tensor(np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 4, 1, 1))
        out = T.pixel_shuffle(x, 2).data
        np.testing.assert_array_equal(out, [[[[1.0, 2.0], [3.0, 4.0]]]])

    def test_round_trip(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((2, 12, 3, 5))
        back = T.pixel_unshuffle(T.pixel_shuffle(T.Tensor(x), 2), 2).data
        np.testing.assert_array_equal(back, x)

    def test_bad_channels_rejected(self):
        with pytest.raises(ShapeError):
            T.pixel_shuffle(T.Tensor(np.zeros((1, 6, 2, 2))), 2)


class TestBatchNorm:
    def test_standardized_input_passes_through(self):
        rng = np.random.default_rng(10)
        x = rng.standard_normal((4, 3, 8, 8))
        x = (x - x.mean(axis=(0, 2, 3), keepdims=True)) / x.std(axis=(0, 2, 3), keepdims=True)
        rm, rv = np.zeros(3), np.ones(3)
        out = T.batch_norm(T.Tensor(x), T.Tensor(np.ones(3)), T.Tensor(np.zeros(3)), rm, rv, training=True)
        assert np.max(np.abs(out.data - x)) < 1e-4

    def test_training_normalizes(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((2, 5, 6, 6)) * 7.0 + 3.0
        rm, rv = np.zeros(5), np.ones(5)
        out = T.batch_norm(T.Tensor(x), T.Tensor(np.ones(5)), T.Tensor(np.zeros(5)), rm, rv, training=True).data
        np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), 0.0, atol=1e-10)
        np.testing.assert_allclose(out.var(axis=(0, 2, 3)), 1.0, atol=1e-3)

    def test_inference_uses_running_stats(self):
        x = np.full((1, 2, 2, 2), 5.0)
        rm, rv = np.array([5.0, 1.0]), np.array([4.0, 1.0])
        out = T.batch_norm(T.Tensor(x), T.Tensor(np.ones(2)), T.Tensor(np.zeros(2)), rm, rv, training=False).data
        np.testing.assert_allclose(out[0, 0], 0.0, atol=1e-9)
        np.testing.assert_allclose(out[0, 1], 4.0 / np.sqrt(1.0 + 1e-5), rtol=1e-9)

    def test_single_value_stats_rejected(self):
        rm, rv = np.zeros(1), np.ones(1)
        with pytest.raises(ContractError):
            T.batch_norm(T.Tensor(np.zeros((1, 1, 1, 1))), T.Tensor(np.ones(1)), T.Tensor(np.zeros(1)), rm, rv, training=True)


class TestSerialization:
    def test_round_trip_exact(self):
        rng = np.random.default_rng(12)
        for shape in [(), (3,), (2, 3), (2, 3, 4, 5)]:
            a = rng.standard_normal(shape)
            buf = io.BytesIO()
            T.save_array(buf, a)
            buf.seek(0)
            b = T.load_array(buf)
            assert b.shape == a.shape
            assert a.tobytes() == b.tobytes()

    def test_header_layout(self):
        buf = io.BytesIO()
        T.save_array(buf, np.array([[1.0, 2.0]]))
        raw = buf.getvalue()
        assert raw[:4] == b"HGT1"
        assert raw[4:8] == (2).to_bytes(4, "little")
        assert raw[8:12] == (1).to_bytes(4, "little")
        assert raw[12:16] == (2).to_bytes(4, "little")
        assert len(raw) == 16 + 2 * 8

    def test_bad_magic(self):
        with pytest.raises(TensorFormatError):
            T.load_array(io.BytesIO(b"NOPE" + b"\x00" * 16))

    def test_truncated_payload(self):
        buf = io.BytesIO()
        T.save_array(buf, np.ones(4))
        raw = buf.getvalue()[:-8]
        with pytest.raises(TensorFormatError):
            T.load_array(io.BytesIO(raw))


class TestShapeOps:
    def test_concat_and_split_back(self):
        a = np.ones((2, 3))
        b = np.zeros((2, 2))
        out = T.concat([T.Tensor(a), T.Tensor(b)], axis=1)
        assert out.shape == (2, 5)

    def test_getitem_fancy(self):
        x = T.Tensor(np.arange(12.0).reshape(4, 3))
        out = x[np.array([2, 0])]
        np.testing.assert_array_equal(out.data, [[6.0, 7.0, 8.0], [0.0, 1.0, 2.0]])

    def test_repeat_leading(self):
        x = T.Tensor(np.arange(6.0).reshape(2, 3))
        out = T.repeat_leading(x, 4)
        assert out.shape == (4, 2, 3)
        np.testing.assert_array_equal(out.data[3], x.data)
