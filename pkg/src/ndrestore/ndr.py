"""Learnable degradation dictionary with query and injection modules.

The dictionary D (M x N) holds N degradation prototypes of feature
dimension M. The query path maps image features to M channels, takes
per-pixel dot products with D's columns, softmax-normalizes them into an
affinity matrix S (HW x N), and re-weights D's transpose with S to
approximate the image's degradation U. The injection path projects both
U and the image feature F into a shared low-rank space with CP-Conv
(three sigmoid-gated rank-1 factors along channel/height/width,
recombined by outer product and averaged over the rank axis K) and
combines them with the affine rule F_out = (F_cp * U_cp + U_cp) + F.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .tensor import (
    Tensor,
    concat,
    conv_1x1,
    matmul,
    mean,
    reshape,
    sigmoid,
    softmax_rows,
    transpose,
)


class NdrDictionary:
    """Learnable dictionary D with M feature dims per degradation slot."""

    INIT_STD = 0.02

    def __init__(self, m, n, rng, dtype=np.float64, name="ndr.D"):
        self.m = int(m)
        self.n = int(n)
        self.D = Tensor(rng.normal(0.0, self.INIT_STD, size=(m, n)).astype(dtype),
                        requires_grad=True, name=name)

    def params(self):
        return {self.D.name: self.D}


@dataclasses.dataclass
class ApproxDegradation:
    """Queried degradation: U is spatially aligned with the feature map."""

    U: Tensor          # (..., H, W, C)
    U_prime: Tensor    # (..., HW, M)


def _ensure_batched(f):
    if f.data.ndim == 3:
        return reshape(f, (1,) + f.data.shape), False
    if f.data.ndim == 4:
        return f, True
    raise ValueError(f"expected (H, W, C) or (B, H, W, C), got shape {f.shape}")


def affinity_logits(f, dictionary, map_w, map_b):
    """Per-pixel dot products between mapped features and D's columns.

    Returns logits of shape (B, HW, N) (no softmax applied).
    """
    f4, _ = _ensure_batched(f)
    b, h, w, _ = f4.data.shape
    d = dictionary.D
    m, n = d.data.shape
    p = conv_1x1(f4, map_w, map_b)
    if p.data.shape[-1] != m:
        raise ValueError(f"feature mapping produced {p.data.shape[-1]} dims, dictionary has {m}")
    logits = matmul(reshape(p, (b * h * w, m)), d)
    return reshape(logits, (b, h * w, n))


def dq_affinity(f, dictionary, map_w, map_b):
    """Affinity matrix S: row-stochastic weights over degradation slots."""
    f4, batched = _ensure_batched(f)
    s = softmax_rows(affinity_logits(f4, dictionary, map_w, map_b))
    return s if batched else reshape(s, s.data.shape[1:])


def dq_query(s, dictionary, out_w, out_b, spatial):
    """Re-weight D's transpose with S, then map back to feature channels.

    ``spatial`` is the (H, W) shape the flattened pixel axis folds back
    into. Returns an :class:`ApproxDegradation`.
    """
    d = dictionary.D
    m, n = d.data.shape
    batched = s.data.ndim == 3
    s3 = s if batched else reshape(s, (1,) + s.data.shape)
    b, hw, sn = s3.data.shape
    if sn != n:
        raise ValueError(f"affinity has {sn} slots, dictionary has {n}")
    h, w = spatial
    if hw != h * w:
        raise ValueError(f"affinity rows {hw} do not match spatial {h}x{w}")
    u_prime = matmul(reshape(s3, (b * hw, n)), transpose(d))
    u = conv_1x1(reshape(u_prime, (b, h, w, m)), out_w, out_b)
    u_prime = reshape(u_prime, (b, hw, m))
    if not batched:
        u = reshape(u, u.data.shape[1:])
        u_prime = reshape(u_prime, u_prime.data.shape[1:])
    return ApproxDegradation(U=u, U_prime=u_prime)


class DqModule:
    """Feature mapping, affinity calculation and degradation query.

    The dictionary enters twice, as transposes of each other: once as
    the similarity kernel for the logits and once as the basis that S
    resamples.
    """

    def __init__(self, channels, dictionary, rng, dtype=np.float64, name="dq"):
        c, m = channels, dictionary.m
        self.dictionary = dictionary
        self.name = name
        self.map_w = Tensor(rng.normal(0.0, c ** -0.5, size=(c, m)).astype(dtype),
                            requires_grad=True, name=f"{name}.map_w")
        self.map_b = Tensor(np.zeros(m, dtype=dtype), requires_grad=True, name=f"{name}.map_b")
        self.out_w = Tensor(rng.normal(0.0, m ** -0.5, size=(m, c)).astype(dtype),
                            requires_grad=True, name=f"{name}.out_w")
        self.out_b = Tensor(np.zeros(c, dtype=dtype), requires_grad=True, name=f"{name}.out_b")

    def params(self):
        return {t.name: t for t in (self.map_w, self.map_b, self.out_w, self.out_b)}

    def __call__(self, f):
        f4, batched = _ensure_batched(f)
        _, h, w, _ = f4.data.shape
        s = dq_affinity(f4, self.dictionary, self.map_w, self.map_b)
        approx = dq_query(s, self.dictionary, self.out_w, self.out_b, (h, w))
        if not batched:
            s = reshape(s, s.data.shape[1:])
            approx = ApproxDegradation(U=reshape(approx.U, approx.U.data.shape[1:]),
                                       U_prime=reshape(approx.U_prime, approx.U_prime.data.shape[1:]))
        return s, approx


class CpConv:
    """Low-rank map onto (0,1): rank-K factors along C, H and W.

    Each projector pools the two complementary axes, runs the pooled
    1-D profile through a learned affine map onto K rows, and gates it
    with a sigmoid.
    """

    INIT_STD = 0.3

    def __init__(self, k, rng, dtype=np.float64, name="cp"):
        self.k = int(k)
        self.name = name
        self.weights = []
        for axis in ("c", "h", "w"):
            w = Tensor(rng.normal(0.0, self.INIT_STD, size=(1, k)).astype(dtype),
                       requires_grad=True, name=f"{name}.{axis}_w")
            bias = Tensor(np.zeros(k, dtype=dtype), requires_grad=True, name=f"{name}.{axis}_b")
            self.weights.append((w, bias))

    def params(self):
        out = {}
        for w, bias in self.weights:
            out[w.name] = w
            out[bias.name] = bias
        return out

    def factors(self, x):
        """Sigmoid-gated rank-1 factors (B,K,C), (B,K,H), (B,K,W)."""
        x4, _ = _ensure_batched(x)
        b, h, w, c = x4.data.shape
        if not self.k < min(c, h, w):
            raise ValueError(f"rank K={self.k} must be < min(C,H,W)={min(c, h, w)}")
        pools = (
            mean(x4, axis=(1, 2)),   # over (H, W) -> (B, C)
            mean(x4, axis=(2, 3)),   # over (W, C) -> (B, H)
            mean(x4, axis=(1, 3)),   # over (H, C) -> (B, W)
        )
        out = []
        for pooled, (weight, bias) in zip(pools, self.weights):
            length = pooled.data.shape[1]
            proj = matmul(reshape(pooled, (b * length, 1)), weight)
            proj = reshape(proj, (b, length, self.k)) + bias
            out.append(sigmoid(transpose(proj, (0, 2, 1))))
        return tuple(out)

    def __call__(self, x):
        x4, batched = _ensure_batched(x)
        out = cp_recombine(*self.factors(x4))
        return out if batched else reshape(out, out.data.shape[1:])


def kronecker_slices(u_c, u_h, u_w):
    """Element-indexed outer product of the three factors: (B,K,H,W,C).

    Slice k is the rank-1 tensor u_h[k] x u_w[k] x u_c[k].
    """
    b, k, c = u_c.data.shape
    h = u_h.data.shape[2]
    w = u_w.data.shape[2]
    return (reshape(u_c, (b, k, 1, 1, c))
            * reshape(u_h, (b, k, h, 1, 1))
            * reshape(u_w, (b, k, 1, w, 1)))


def cp_recombine(u_c, u_h, u_w):
    """Outer-product recombination, point-wise averaged over the rank axis."""
    return mean(kronecker_slices(u_c, u_h, u_w), axis=1)


def cp_conv(x, projector):
    """Functional form of :class:`CpConv`."""
    return projector(x)


def affine_inject(f, f_cp, u_cp):
    """Affine combination of the low-rank maps: (F_cp * U_cp + U_cp) + F."""
    return f_cp * u_cp + u_cp + f


class DiModule:
    """Degradation injection: CP-Conv both inputs, combine affinely."""

    def __init__(self, k, rng, dtype=np.float64, name="di"):
        self.cp_f = CpConv(k, rng, dtype, name=f"{name}.cp_f")
        self.cp_u = CpConv(k, rng, dtype, name=f"{name}.cp_u")

    def params(self):
        return {**self.cp_f.params(), **self.cp_u.params()}

    def __call__(self, f, u):
        if f.data.shape != u.data.shape:
            raise ValueError(f"feature/degradation shape mismatch: {f.shape} vs {u.shape}")
        return affine_inject(f, self.cp_f(f), self.cp_u(u))


def di_inject(f, u, module):
    """Functional form of :class:`DiModule`."""
    return module(f, u)


def concat_mix(f, u, w, b):
    """Concatenation & convolution stand-in used by the no_cp ablation."""
    return conv_1x1(concat([f, u], axis=-1), w, b) + f
