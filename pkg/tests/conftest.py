import numpy as np
import pytest

from ndrestore.tensor import Tensor


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def numeric_grad(f, x, h=1e-5):
    """Central finite differences of a scalar function of one array."""
    x = x.copy()
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def rel_error(analytic, numeric):
    scale = max(np.abs(numeric).max(), np.abs(analytic).max(), 1e-8)
    return np.abs(analytic - numeric).max() / scale


def check_grad(build, inputs, h=1e-5, tol=1e-4):
    """Compare analytic grads of build(*tensors) against central differences.

    ``build`` maps input Tensors to a scalar Tensor and must be a pure
    function of its arguments.
    """
    tensors = [Tensor(a.copy(), requires_grad=True) for a in inputs]
    loss = build(*tensors)
    loss.backward()
    for i, t in enumerate(tensors):
        def scalar(x, i=i):
            args = [Tensor(a.copy()) for a in inputs]
            args[i] = Tensor(x)
            return build(*args).item()
        num = numeric_grad(scalar, inputs[i], h=h)
        assert t.grad is not None, f"input {i} received no gradient"
        err = rel_error(t.grad, num)
        assert err < tol, f"input {i}: finite-difference mismatch (rel err {err:.3g})"


def check_param_grads(loss_fn, params, h=1e-5, tol=1e-4, max_entries=None, rng=None):
    """Finite-difference check of named parameter Tensors.

    ``loss_fn`` re-runs the forward pass from current parameter values.
    When ``max_entries`` is set, that many entries are probed per
    parameter (always including at least one).
    """
    for p in params.values():
        p.grad = None
    loss_fn().backward()
    for name, p in params.items():
        flat = p.data.reshape(-1)
        n = flat.size
        if max_entries is not None and n > max_entries:
            picks = (rng or np.random.default_rng(0)).choice(n, size=max_entries, replace=False)
        else:
            picks = range(n)
        assert p.grad is not None, f"{name} received no gradient"
        gflat = p.grad.reshape(-1)
        for i in picks:
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_fn().item()
            flat[i] = orig - h
            fm = loss_fn().item()
            flat[i] = orig
            num = (fp - fm) / (2.0 * h)
            ana = gflat[i]
            err = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
            assert err < tol, f"{name}[{i}]: analytic {ana:.6g} vs numeric {num:.6g} (rel err {err:.3g})"
