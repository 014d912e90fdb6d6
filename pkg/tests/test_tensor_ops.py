import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ndrestore.tensor import (
    Tensor,
    concat,
    conv_1x1,
    conv_3x3,
    conv2d,
    global_avg_pool,
    matmul,
    mean,
    mse,
    sigmoid,
    softmax_rows,
    sum_,
    upsample_nearest2x,
)


def naive_matmul(a, b):
    p, q = a.shape
    q2, r = b.shape
    out = np.zeros((p, r))
    for i in range(p):
        for j in range(r):
            for k in range(q):
                out[i, j] += a[i, k] * b[k, j]
    return out


def naive_conv2d(x, w, b, stride, padding):
    bs, h, wd, ci = x.shape
    kh, kw, _, co = w.shape
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((bs, ho, wo, co))
    for n in range(bs):
        for oy in range(ho):
            for ox in range(wo):
                for oc in range(co):
                    acc = b[oc]
                    for i in range(kh):
                        for j in range(kw):
                            for c in range(ci):
                                acc += xp[n, oy * stride + i, ox * stride + j, c] * w[i, j, c, oc]
                    out[n, oy, ox, oc] = acc
    return out


class TestMatmul:
    def test_identity(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = matmul(Tensor(a), Tensor(np.eye(2)))
        np.testing.assert_array_equal(out.data, a)

    def test_by_hand(self):
        out = matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [5.0]]))
        np.testing.assert_array_equal(out.data, [[13.0]])

    def test_against_triple_loop(self, rng):
        a = rng.standard_normal((4, 3))
        b = rng.standard_normal((3, 5))
        out = matmul(Tensor(a), Tensor(b))
        np.testing.assert_allclose(out.data, naive_matmul(a, b), atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


class TestSoftmaxRows:
    def test_symmetric_row(self):
        out = softmax_rows(Tensor([[0.0, 0.0]]))
        np.testing.assert_allclose(out.data, [[0.5, 0.5]], atol=1e-12)

    def test_closed_form(self):
        out = softmax_rows(Tensor([[np.log(2.0), 0.0]]))
        np.testing.assert_allclose(out.data, [[2.0 / 3.0, 1.0 / 3.0]], atol=1e-12)

    def test_unit_logits(self):
        out = softmax_rows(Tensor([[1.0, -1.0]]))
        np.testing.assert_allclose(out.data, [[0.880797, 0.119203]], atol=1e-5)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (5, 7), elements=st.floats(-50, 50)))
    def test_rows_sum_to_one(self, x):
        out = softmax_rows(Tensor(x)).data
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-6)
        assert (out >= 0).all()

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (3, 4), elements=st.floats(-20, 20)),
           st.floats(-30, 30))
    def test_shift_invariance(self, x, c):
        base = softmax_rows(Tensor(x)).data
        shifted = softmax_rows(Tensor(x + c)).data
        np.testing.assert_allclose(base, shifted, atol=1e-8)

    def test_extreme_logits_stay_finite(self):
        out = softmax_rows(Tensor([[1e4, -1e4, 0.0]]))
        assert np.all(np.isfinite(out.data))


class TestElementwise:
    def test_sigmoid_zero(self):
        assert sigmoid(Tensor(np.zeros(3))).data[0] == 0.5

    def test_sigmoid_saturates_finite(self):
        out = sigmoid(Tensor([-1e4, 1e4])).data
        assert np.all(np.isfinite(out))

    def test_mse_identity(self, rng):
        x = Tensor(rng.random((4, 5)))
        assert mse(x, x).item() == 0.0

    def test_mse_value(self):
        assert mse(Tensor([3.0]), Tensor([0.0])).item() == 9.0

    def test_mse_shape_mismatch(self):
        with pytest.raises(ValueError):
            mse(Tensor(np.ones((2, 2))), Tensor(np.ones((2, 3))))

    def test_add_broadcast(self, rng):
        a = rng.random((2, 3, 4))
        b = rng.random(4)
        out = Tensor(a) + Tensor(b)
        np.testing.assert_array_equal(out.data, a + b)

    def test_mean_over_axis(self, rng):
        a = rng.random((3, 4, 5))
        np.testing.assert_allclose(mean(Tensor(a), axis=1).data, a.mean(axis=1))
        np.testing.assert_allclose(sum_(Tensor(a), axis=(0, 2)).data, a.sum(axis=(0, 2)))

    def test_global_avg_pool(self, rng):
        a = rng.random((2, 4, 6, 3))
        out = global_avg_pool(Tensor(a))
        assert out.shape == (2, 1, 1, 3)
        np.testing.assert_allclose(out.data, a.mean(axis=(1, 2), keepdims=True))

    def test_concat_roundtrip(self, rng):
        a, b = rng.random((2, 3)), rng.random((2, 5))
        out = concat([Tensor(a), Tensor(b)], axis=1)
        np.testing.assert_array_equal(out.data, np.concatenate([a, b], axis=1))

    def test_upsample_nearest(self):
        x = np.arange(4.0).reshape(1, 2, 2, 1)
        out = upsample_nearest2x(Tensor(x)).data
        np.testing.assert_array_equal(out[0, :, :, 0],
                                      [[0, 0, 1, 1], [0, 0, 1, 1], [2, 2, 3, 3], [2, 2, 3, 3]])


class TestConv:
    def test_conv1x1_identity(self, rng):
        x = rng.random((2, 4, 4, 3))
        out = conv_1x1(Tensor(x), Tensor(np.eye(3)), Tensor(np.zeros(3)))
        np.testing.assert_array_equal(out.data, x)

    def test_conv1x1_channel_mismatch(self, rng):
        with pytest.raises(ValueError):
            conv_1x1(Tensor(rng.random((2, 4, 4, 3))), Tensor(np.eye(4)))

    def test_conv3x3_matches_naive(self, rng):
        x = rng.standard_normal((2, 5, 6, 3))
        w = rng.standard_normal((3, 3, 3, 4))
        b = rng.standard_normal(4)
        out = conv_3x3(Tensor(x), Tensor(w), Tensor(b))
        np.testing.assert_allclose(out.data, naive_conv2d(x, w, b, 1, 1), atol=1e-12)

    def test_conv3x3_stride2_matches_naive(self, rng):
        x = rng.standard_normal((1, 6, 6, 2))
        w = rng.standard_normal((3, 3, 2, 5))
        b = rng.standard_normal(5)
        out = conv_3x3(Tensor(x), Tensor(w), Tensor(b), stride=2)
        np.testing.assert_allclose(out.data, naive_conv2d(x, w, b, 2, 1), atol=1e-12)

    def test_conv2d_channel_mismatch(self, rng):
        with pytest.raises(ValueError):
            conv2d(Tensor(rng.random((1, 4, 4, 3))), Tensor(rng.random((3, 3, 2, 4))))


class TestDeterminism:
    def test_same_seed_bitwise_identical(self):
        def run():
            r = np.random.default_rng(77)
            x = Tensor(r.standard_normal((3, 8, 8, 4)))
            w = Tensor(r.standard_normal((3, 3, 4, 4)))
            b = Tensor(r.standard_normal(4))
            out = conv_3x3(x, w, b)
            return sigmoid(out).data.tobytes()
        assert run() == run()

    def test_forward_ops_finite_on_finite_inputs(self, rng):
        x = Tensor(rng.standard_normal((2, 6, 6, 3)) * 100)
        w = Tensor(rng.standard_normal((3, 3, 3, 3)))
        out = sigmoid(conv_3x3(x, w))
        assert np.all(np.isfinite(out.data))
        assert np.all(np.isfinite(softmax_rows(Tensor(rng.standard_normal((5, 4)) * 300)).data))
