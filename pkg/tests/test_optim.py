import numpy as np
import pytest

from ndrestore.optim import Adam, AdamState, adam_step
from ndrestore.tensor import Tensor, mse


def test_first_step_magnitude():
    # bias-corrected first step with g=1 moves by ~lr (up to eps)
    p = np.array([0.5])
    state = AdamState([p])
    adam_step([p], [np.array([1.0])], state, lr=1e-4)
    delta = abs(0.5 - p[0])
    assert 0.99e-4 <= delta <= 1.0e-4


def test_zero_grad_no_decay_keeps_param():
    p = np.array([0.7, -0.3])
    state = AdamState([p])
    for _ in range(5):
        adam_step([p], [np.zeros(2)], state, lr=1e-2, weight_decay=0.0)
    np.testing.assert_array_equal(p, [0.7, -0.3])


def test_quadratic_descent_is_monotone():
    w = np.array([1.0])
    state = AdamState([w])
    values = [w[0] ** 2]
    for _ in range(10):
        adam_step([w], [2.0 * w], state, lr=0.05)
        values.append(w[0] ** 2)
    assert all(b < a for a, b in zip(values, values[1:]))


def test_non_finite_gradient_aborts_before_update():
    p1, p2 = np.array([1.0]), np.array([2.0])
    state = AdamState([p1, p2])
    with pytest.raises(FloatingPointError, match="param"):
        adam_step([p1, p2], [np.array([0.5]), np.array([np.nan])], state, lr=0.1)
    np.testing.assert_array_equal(p1, [1.0])
    np.testing.assert_array_equal(p2, [2.0])
    assert state.step == 0


def test_weight_decay_pulls_toward_zero():
    p = np.array([1.0])
    state = AdamState([p])
    adam_step([p], [np.zeros(1)], state, lr=1e-2, weight_decay=1e-1)
    assert p[0] < 1.0


def test_adam_class_trains_tensor():
    w = Tensor(np.array([1.0]), requires_grad=True, name="w")
    opt = Adam({"w": w}, lr=0.05)
    for _ in range(20):
        loss = mse(w, Tensor(np.array([0.0])))
        opt.zero_grad()
        loss.backward()
        opt.step()
    assert abs(w.data[0]) < 1.0


def test_adam_class_missing_grad_means_zero():
    w = Tensor(np.array([0.25]), requires_grad=True, name="w")
    opt = Adam({"w": w}, lr=0.1)
    opt.step()  # no backward ran; parameter must not move
    np.testing.assert_array_equal(w.data, [0.25])


def test_state_tensor_roundtrip():
    w = Tensor(np.array([1.0, 2.0]), requires_grad=True, name="w")
    opt = Adam({"w": w}, lr=0.1)
    w.grad = np.array([0.1, -0.2])
    opt.step()
    saved = {k: v.copy() for k, v in opt.state_tensors().items()}
    opt2 = Adam({"w": w}, lr=0.1)
    opt2.load_state_tensors(saved, step=1)
    np.testing.assert_array_equal(opt2.state.m[0], opt.state.m[0])
    np.testing.assert_array_equal(opt2.state.v[0], opt.state.v[0])
    assert opt2.state.step == 1
