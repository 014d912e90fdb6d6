"""Finite-difference checks of every differentiable op, plus backward basics."""

import numpy as np
import pytest

from conftest import check_grad, numeric_grad, rel_error

from ndrestore.tensor import (
    Tensor,
    concat,
    conv_1x1,
    conv_3x3,
    global_avg_pool,
    matmul,
    mean,
    mse,
    no_grad,
    reshape,
    sigmoid,
    softmax_rows,
    sum_,
    transpose,
    upsample_nearest2x,
)

SEEDS = range(10)


def weighted_sum(t, w):
    return sum_(t * Tensor(w))


class TestBackwardBasics:
    def test_sum_sigmoid_at_zero(self):
        x = Tensor(np.zeros((2, 3)), requires_grad=True)
        sum_(sigmoid(x)).backward()
        np.testing.assert_allclose(x.grad, 0.25, atol=1e-12)

    def test_mse_closed_form(self):
        x = Tensor(np.array([3.0]), requires_grad=True)
        mse(x, Tensor(np.array([0.0]))).backward()
        np.testing.assert_allclose(x.grad, [6.0], atol=1e-12)

    def test_grad_accumulates_additively(self):
        x = Tensor(np.array([2.0]), requires_grad=True)
        loss = sum_(x * 3.0) + sum_(x * x)
        loss.backward()
        np.testing.assert_allclose(x.grad, [3.0 + 4.0], atol=1e-12)

    def test_non_scalar_loss_rejected(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError):
            (x * 2.0).backward()

    def test_detached_loss_rejected(self):
        x = Tensor(np.ones(1))
        with pytest.raises(RuntimeError):
            sum_(x * 2.0).backward()

    def test_no_grad_builds_no_graph(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        with no_grad():
            out = sigmoid(x * 2.0)
        assert out._backward is None and not out.requires_grad


@pytest.mark.parametrize("seed", SEEDS)
class TestOpGradients:
    def test_matmul(self, seed):
        r = np.random.default_rng(seed)
        a, b = r.standard_normal((3, 4)), r.standard_normal((4, 2))
        w = r.standard_normal((3, 2))
        check_grad(lambda x, y: weighted_sum(matmul(x, y), w), [a, b])

    def test_add_mul_broadcast(self, seed):
        r = np.random.default_rng(seed)
        a, b = r.standard_normal((2, 3, 4)), r.standard_normal(4)
        w = r.standard_normal((2, 3, 4))
        check_grad(lambda x, y: weighted_sum(x * y + y, w), [a, b])

    def test_sigmoid(self, seed):
        r = np.random.default_rng(seed)
        a = r.standard_normal((3, 5))
        w = r.standard_normal((3, 5))
        check_grad(lambda x: weighted_sum(sigmoid(x), w), [a])

    def test_softmax_rows(self, seed):
        r = np.random.default_rng(seed)
        a = r.standard_normal((4, 5))
        w = r.standard_normal((4, 5))
        check_grad(lambda x: weighted_sum(softmax_rows(x), w), [a])

    def test_mean_and_pool(self, seed):
        r = np.random.default_rng(seed)
        a = r.standard_normal((2, 4, 4, 3))
        w1 = r.standard_normal((2, 1, 1, 3))
        w2 = r.standard_normal((2, 4, 3))
        check_grad(lambda x: weighted_sum(global_avg_pool(x), w1), [a])
        check_grad(lambda x: weighted_sum(mean(x, axis=2), w2), [a])

    def test_conv_1x1(self, seed):
        r = np.random.default_rng(seed)
        x = r.standard_normal((2, 3, 3, 4))
        w = r.standard_normal((4, 2))
        b = r.standard_normal(2)
        ws = r.standard_normal((2, 3, 3, 2))
        check_grad(lambda a, b_, c: weighted_sum(conv_1x1(a, b_, c), ws), [x, w, b])

    def test_conv_3x3(self, seed):
        r = np.random.default_rng(seed)
        x = r.standard_normal((2, 4, 5, 2))
        w = r.standard_normal((3, 3, 2, 3))
        b = r.standard_normal(3)
        ws = r.standard_normal((2, 4, 5, 3))
        check_grad(lambda a, b_, c: weighted_sum(conv_3x3(a, b_, c), ws), [x, w, b])

    def test_conv_3x3_stride2(self, seed):
        r = np.random.default_rng(seed)
        x = r.standard_normal((1, 6, 6, 2))
        w = r.standard_normal((3, 3, 2, 2))
        b = r.standard_normal(2)
        ws = r.standard_normal((1, 3, 3, 2))
        check_grad(lambda a, b_, c: weighted_sum(conv_3x3(a, b_, c, stride=2), ws), [x, w, b])

    def test_upsample(self, seed):
        r = np.random.default_rng(seed)
        x = r.standard_normal((2, 3, 3, 2))
        ws = r.standard_normal((2, 6, 6, 2))
        check_grad(lambda a: weighted_sum(upsample_nearest2x(a), ws), [x])

    def test_reshape_transpose_concat(self, seed):
        r = np.random.default_rng(seed)
        a = r.standard_normal((2, 6))
        b = r.standard_normal((2, 3))
        ws = r.standard_normal((2, 9))

        def build(x, y):
            xt = transpose(reshape(x, (6, 2)))
            return weighted_sum(concat([xt, y], axis=1), ws)

        check_grad(build, [a, b])

    def test_mse_grad(self, seed):
        r = np.random.default_rng(seed)
        a, b = r.standard_normal((3, 4)), r.standard_normal((3, 4))
        check_grad(lambda x, y: mse(x, y), [a, b])


def test_numeric_grad_helper_sanity():
    # d/dx sum(x^2) = 2x, exactly recovered by central differences
    x = np.array([1.0, -2.0, 0.5])
    g = numeric_grad(lambda a: float((a * a).sum()), x)
    assert rel_error(2 * x, g) < 1e-8
