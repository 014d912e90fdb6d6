"""Dense tensors with reverse-mode automatic differentiation on NumPy.

Every numeric operation the restoration models need lives here: matrix
product, row softmax, sigmoid, reductions, 1x1/3x3 convolution, nearest
upsampling, concatenation and MSE. Each op records a backward closure on
its output; ``Tensor.backward`` replays the closures in reverse
topological order and accumulates gradients additively into every
reachable leaf with ``requires_grad=True``.
"""

from __future__ import annotations

import contextlib

import numpy as np

_FLOAT_TYPES = (np.dtype(np.float32), np.dtype(np.float64))

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (forward-only evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """N-d float array plus the bookkeeping needed to replay adjoints.

    ``data`` is a row-major NumPy array (float32 or float64). ``grad``,
    populated by :meth:`backward`, always has the same shape as ``data``.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_backward", "_parents")

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.asarray(data)
        if arr.dtype not in _FLOAT_TYPES:
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        req = ", requires_grad=True" if self.requires_grad else ""
        nm = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{req}{nm})"

    def item(self):
        if self.data.size != 1:
            raise ValueError(f"item() needs a one-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self):
        return np.array(self.data, copy=True)

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    # --- autograd core ---

    def backward(self):
        """Populate ``grad`` on every reachable ``requires_grad`` leaf.

        The loss must be scalar and attached to a live graph.
        """
        if self.data.size != 1:
            raise ValueError(f"backward expects a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise RuntimeError("loss does not depend on any tracked tensor")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, children_done = stack.pop()
            if children_done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        _accum(self, np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()

    # --- operator sugar ---

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


def _accum(t, g):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g, target_shape):
    """Sum a broadcast gradient back down to the operand's shape."""
    if g.shape == target_shape:
        return g
    while g.ndim > len(target_shape):
        g = g.sum(axis=0)
    for i, (gs, ts) in enumerate(zip(g.shape, target_shape)):
        if ts == 1 and gs != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _tracked(*tensors):
    return _grad_enabled and any(t.requires_grad for t in tensors if isinstance(t, Tensor))


def _attach(out, parents, bw):
    out.requires_grad = True
    out._parents = tuple(p for p in parents if isinstance(p, Tensor))
    out._backward = bw
    return out


# --- elementwise ---

def add(a, b):
    if not isinstance(b, Tensor):
        out = Tensor(a.data + b)
        if _tracked(a):
            def bw():
                _accum(a, out.grad)
            _attach(out, (a,), bw)
        return out
    out = Tensor(a.data + b.data)
    if _tracked(a, b):
        def bw():
            if a.requires_grad:
                _accum(a, _unbroadcast(out.grad, a.data.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(out.grad, b.data.shape))
        _attach(out, (a, b), bw)
    return out


def sub(a, b):
    if not isinstance(b, Tensor):
        return add(a, -b)
    return add(a, neg(b))


def neg(a):
    out = Tensor(-a.data)
    if _tracked(a):
        def bw():
            _accum(a, -out.grad)
        _attach(out, (a,), bw)
    return out


def mul(a, b):
    if not isinstance(b, Tensor):
        out = Tensor(a.data * b)
        if _tracked(a):
            def bw():
                _accum(a, out.grad * b)
            _attach(out, (a,), bw)
        return out
    out = Tensor(a.data * b.data)
    if _tracked(a, b):
        def bw():
            if a.requires_grad:
                _accum(a, _unbroadcast(out.grad * b.data, a.data.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(out.grad * a.data, b.data.shape))
        _attach(out, (a, b), bw)
    return out


def sigmoid(a):
    """Numerically stable logistic function."""
    x = a.data
    s = np.empty_like(x)
    pos = x >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    s[~pos] = ex / (1.0 + ex)
    out = Tensor(s)
    if _tracked(a):
        def bw():
            _accum(a, out.grad * s * (1.0 - s))
        _attach(out, (a,), bw)
    return out


# --- reductions ---

def _axis_tuple(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        return (axis % ndim,)
    return tuple(ax % ndim for ax in axis)


def sum_(a, axis=None, keepdims=False):
    axes = _axis_tuple(axis, a.data.ndim)
    out = Tensor(a.data.sum(axis=axes, keepdims=keepdims))
    if _tracked(a):
        def bw():
            g = out.grad
            if not keepdims:
                for ax in sorted(axes):
                    g = np.expand_dims(g, ax)
            _accum(a, np.broadcast_to(g, a.data.shape))
        _attach(out, (a,), bw)
    return out


def mean(a, axis=None, keepdims=False):
    """Arithmetic mean over the given axes (all axes when None)."""
    axes = _axis_tuple(axis, a.data.ndim)
    count = 1
    for ax in axes:
        count *= a.data.shape[ax]
    out = Tensor(a.data.mean(axis=axes, keepdims=keepdims))
    if _tracked(a):
        def bw():
            g = out.grad
            if not keepdims:
                for ax in sorted(axes):
                    g = np.expand_dims(g, ax)
            _accum(a, np.broadcast_to(g, a.data.shape) / count)
        _attach(out, (a,), bw)
    return out


def global_avg_pool(a):
    """Mean over the spatial axes of a (..., H, W, C) map, keeping dims."""
    if a.data.ndim < 3:
        raise ValueError(f"global_avg_pool needs (..., H, W, C), got shape {a.shape}")
    return mean(a, axis=(-3, -2), keepdims=True)


# --- shape ops ---

def reshape(a, shape):
    out = Tensor(a.data.reshape(shape))
    if _tracked(a):
        def bw():
            _accum(a, out.grad.reshape(a.data.shape))
        _attach(out, (a,), bw)
    return out


def transpose(a, axes=None):
    out = Tensor(a.data.transpose(axes))
    if _tracked(a):
        inv = None if axes is None else np.argsort(axes)
        def bw():
            _accum(a, out.grad.transpose(inv))
        _attach(out, (a,), bw)
    return out


def concat(tensors, axis=-1):
    axis = axis % tensors[0].data.ndim
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    if _tracked(*tensors):
        sizes = [t.data.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + sizes)
        def bw():
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    idx = [slice(None)] * out.grad.ndim
                    idx[axis] = slice(lo, hi)
                    _accum(t, out.grad[tuple(idx)])
        _attach(out, tensors, bw)
    return out


# --- linear algebra ---

def matmul(a, b):
    """2-D matrix product a[P,Q] @ b[Q,R]."""
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul is 2-D only, got {a.shape} @ {b.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)
    if _tracked(a, b):
        def bw():
            if a.requires_grad:
                _accum(a, out.grad @ b.data.T)
            if b.requires_grad:
                _accum(b, a.data.T @ out.grad)
        _attach(out, (a, b), bw)
    return out


def softmax_rows(a):
    """Softmax along the last axis, stabilized by max subtraction.

    Each row of the result is nonnegative and sums to 1; adding a
    constant to a row leaves that row's output unchanged.
    """
    if a.data.ndim < 2:
        raise ValueError(f"softmax_rows needs rank >= 2, got shape {a.shape}")
    x = a.data
    ex = np.exp(x - x.max(axis=-1, keepdims=True))
    s = ex / ex.sum(axis=-1, keepdims=True)
    out = Tensor(s)
    if _tracked(a):
        def bw():
            g = out.grad
            _accum(a, s * (g - (g * s).sum(axis=-1, keepdims=True)))
        _attach(out, (a,), bw)
    return out


# --- convolution ---

def conv_1x1(x, w, b=None):
    """Pointwise channel mixing: (..., Cin) @ w[Cin, Cout] + b."""
    ci, co = w.data.shape
    if x.data.shape[-1] != ci:
        raise ValueError(f"conv_1x1 expects {ci} input channels, got shape {x.shape}")
    flat = x.data.reshape(-1, ci)
    od = flat @ w.data
    if b is not None:
        od = od + b.data
    out = Tensor(od.reshape(x.data.shape[:-1] + (co,)))
    parents = (x, w) if b is None else (x, w, b)
    if _tracked(*parents):
        def bw():
            g = out.grad.reshape(-1, co)
            if x.requires_grad:
                _accum(x, (g @ w.data.T).reshape(x.data.shape))
            if w.requires_grad:
                _accum(w, flat.T @ g)
            if b is not None and b.requires_grad:
                _accum(b, g.sum(axis=0))
        _attach(out, parents, bw)
    return out


def conv2d(x, w, b=None, stride=1, padding=0):
    """2-D convolution on (B, H, W, Cin) with kernel (kh, kw, Cin, Cout).

    Zero padding, implemented as im2col + GEMM so both passes stay
    BLAS-bound.
    """
    if x.data.ndim != 4:
        raise ValueError(f"conv2d needs (B, H, W, C) input, got shape {x.shape}")
    kh, kw, ci, co = w.data.shape
    bsz, h, wd, xc = x.data.shape
    if xc != ci:
        raise ValueError(f"conv2d expects {ci} input channels, got {xc}")
    xp = x.data
    if padding:
        xp = np.pad(xp, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ValueError(f"conv2d kernel {kh}x{kw} larger than padded input {xp.shape}")
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    win = win[:, ::stride, ::stride]                        # (B, Ho, Wo, Ci, kh, kw)
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(bsz * ho * wo, kh * kw * ci)
    wmat = w.data.reshape(kh * kw * ci, co)
    od = cols @ wmat
    if b is not None:
        od = od + b.data
    out = Tensor(od.reshape(bsz, ho, wo, co))
    parents = (x, w) if b is None else (x, w, b)
    if _tracked(*parents):
        def bw():
            g = out.grad.reshape(bsz * ho * wo, co)
            if w.requires_grad:
                _accum(w, (cols.T @ g).reshape(kh, kw, ci, co))
            if b is not None and b.requires_grad:
                _accum(b, g.sum(axis=0))
            if x.requires_grad:
                dcols = (g @ wmat.T).reshape(bsz, ho, wo, kh, kw, ci)
                dxp = np.zeros_like(xp)
                for i in range(kh):
                    for j in range(kw):
                        dxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += dcols[:, :, :, i, j, :]
                if padding:
                    dxp = dxp[:, padding:padding + h, padding:padding + wd, :]
                _accum(x, dxp)
        _attach(out, parents, bw)
    return out


def conv_3x3(x, w, b=None, stride=1):
    """3x3 convolution with zero padding of 1."""
    if w.data.shape[:2] != (3, 3):
        raise ValueError(f"conv_3x3 expects a 3x3 kernel, got {w.shape}")
    return conv2d(x, w, b, stride=stride, padding=1)


def upsample_nearest2x(x):
    """Nearest-neighbour 2x upsampling of a (B, H, W, C) map."""
    if x.data.ndim != 4:
        raise ValueError(f"upsample_nearest2x needs (B, H, W, C), got shape {x.shape}")
    out = Tensor(x.data.repeat(2, axis=1).repeat(2, axis=2))
    if _tracked(x):
        bsz, h, wd, c = x.data.shape
        def bw():
            _accum(x, out.grad.reshape(bsz, h, 2, wd, 2, c).sum(axis=(2, 4)))
        _attach(out, (x,), bw)
    return out


# --- losses ---

def mse(a, b):
    """Mean of squared differences, as a scalar tensor."""
    if a.data.shape != b.data.shape:
        raise ValueError(f"mse shape mismatch: {a.shape} vs {b.shape}")
    d = a.data - b.data
    out = Tensor(np.asarray((d * d).mean(), dtype=a.data.dtype))
    if _tracked(a, b):
        scale = 2.0 / d.size
        def bw():
            g = out.grad * scale * d
            if a.requires_grad:
                _accum(a, g)
            if b.requires_grad:
                _accum(b, -g)
        _attach(out, (a, b), bw)
    return out


def check_finite(t, what="tensor"):
    """Raise if the tensor picked up NaN/Inf; returns the tensor otherwise."""
    if not np.all(np.isfinite(t.data)):
        raise FloatingPointError(f"non-finite values in {what}")
    return t
