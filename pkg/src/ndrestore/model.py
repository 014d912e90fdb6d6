"""Restoration and degradation networks around the dictionary modules.

RestoreModel is a multi-scale encoder/decoder; at every scale the
encoder feature passes a query+injection junction before decoding.
DegradeModel is a deliberately lighter single-scale network that injects
the finest-scale queried degradation into its features to re-degrade a
clean image. Both networks predict residuals through a zero-initialized
final convolution, so they start as exact identities.
"""

from __future__ import annotations

import numpy as np

from .ndr import DiModule, DqModule, NdrDictionary, concat_mix
from .tensor import (
    Tensor,
    conv_1x1,
    conv_3x3,
    global_avg_pool,
    no_grad,
    reshape,
    sigmoid,
    upsample_nearest2x,
)

VARIANTS = ("full", "no_dq", "no_di", "no_cp")


class Conv3x3:
    def __init__(self, cin, cout, rng, dtype, name, stride=1, zero_init=False):
        self.stride = stride
        if zero_init:
            wdata = np.zeros((3, 3, cin, cout), dtype=dtype)
        else:
            wdata = rng.normal(0.0, (9 * cin) ** -0.5, size=(3, 3, cin, cout)).astype(dtype)
        self.w = Tensor(wdata, requires_grad=True, name=f"{name}.w")
        self.b = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True, name=f"{name}.b")

    def params(self):
        return {self.w.name: self.w, self.b.name: self.b}

    def __call__(self, x):
        return conv_3x3(x, self.w, self.b, stride=self.stride)


class Conv1x1:
    def __init__(self, cin, cout, rng, dtype, name):
        self.w = Tensor(rng.normal(0.0, cin ** -0.5, size=(cin, cout)).astype(dtype),
                        requires_grad=True, name=f"{name}.w")
        self.b = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True, name=f"{name}.b")

    def params(self):
        return {self.w.name: self.w, self.b.name: self.b}

    def __call__(self, x):
        return conv_1x1(x, self.w, self.b)


class Block:
    """conv3x3 -> channel attention gate -> conv3x3, with residual."""

    def __init__(self, channels, rng, dtype, name):
        self.conv1 = Conv3x3(channels, channels, rng, dtype, f"{name}.conv1")
        self.gate = Conv1x1(channels, channels, rng, dtype, f"{name}.gate")
        self.conv2 = Conv3x3(channels, channels, rng, dtype, f"{name}.conv2")

    def params(self):
        return {**self.conv1.params(), **self.gate.params(), **self.conv2.params()}

    def __call__(self, x):
        h = self.conv1(x)
        h = h * sigmoid(self.gate(global_avg_pool(h)))
        return self.conv2(h) + x


class Junction:
    """Query + injection at one encoder-decoder junction.

    Ablation variants swap parts for plain convolutions: ``no_dq``
    replaces the query with a pointwise conv (the dictionary is
    unused), ``no_di`` replaces the injection with a 3x3 conv, and
    ``no_cp`` replaces the low-rank maps with concatenation + conv.
    """

    def __init__(self, channels, dictionary, rank, rng, dtype, name, variant):
        self.variant = variant
        self.name = name
        self.dq = None
        self.u_conv = None
        self.di = None
        self.mix3 = None
        self.mix_cat = None
        if variant == "no_dq":
            self.u_conv = Conv1x1(channels, channels, rng, dtype, f"{name}.u_conv")
        else:
            self.dq = DqModule(channels, dictionary, rng, dtype, name=f"{name}.dq")
        if variant == "no_di":
            self.mix3 = Conv3x3(channels, channels, rng, dtype, f"{name}.mix3")
        elif variant == "no_cp":
            self.mix_cat = Conv1x1(2 * channels, channels, rng, dtype, f"{name}.mix_cat")
        else:
            self.di = DiModule(rank, rng, dtype, name=f"{name}.di")

    def params(self):
        out = {}
        for mod in (self.dq, self.u_conv, self.di, self.mix3, self.mix_cat):
            if mod is not None:
                out.update(mod.params())
        return out

    def __call__(self, f):
        if self.dq is not None:
            s, approx = self.dq(f)
            u = approx.U
        else:
            s, u = None, self.u_conv(f)
        if self.di is not None:
            out = self.di(f, u)
        elif self.mix_cat is not None:
            out = concat_mix(f, u, self.mix_cat.w, self.mix_cat.b)
        else:
            out = self.mix3(f) + f
        return out, u, s


def _check_dims(h, w, scales):
    factor = 2 ** (scales - 1)
    if h % factor or w % factor:
        raise ValueError(f"input {h}x{w} not divisible by {factor} (scales={scales})")


class RestoreModel:
    """Multi-scale restoration network with per-scale junctions."""

    def __init__(self, channels=16, scales=2, dict_m=32, dict_n=8, rank=4,
                 seed=0, dtype=np.float32, variant="full"):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5E]))
        self.channels = channels
        self.scales = scales
        self.rank = rank
        self.variant = variant
        self.dtype = dtype
        self.dictionary = None
        if variant != "no_dq":
            self.dictionary = NdrDictionary(dict_m, dict_n, rng, dtype)
        self.head = Conv3x3(3, channels, rng, dtype, "head")
        self.enc = []
        self.down = []
        self.junctions = []
        self.dec = []
        self.up = []
        for s in range(scales):
            cs = channels * (2 ** s)
            self.enc.append(Block(cs, rng, dtype, f"enc{s}"))
            self.junctions.append(Junction(cs, self.dictionary, rank, rng, dtype, f"junc{s}", variant))
            self.dec.append(Block(cs, rng, dtype, f"dec{s}"))
            if s < scales - 1:
                self.down.append(Conv3x3(cs, 2 * cs, rng, dtype, f"down{s}", stride=2))
                self.up.append(Conv1x1(2 * cs, cs, rng, dtype, f"up{s}"))
        self.tail = Conv3x3(channels, 3, rng, dtype, "tail", zero_init=True)

    def params(self):
        out = {}
        if self.dictionary is not None:
            out.update(self.dictionary.params())
        out.update(self.head.params())
        for mods in (self.enc, self.down, self.junctions, self.dec, self.up):
            for mod in mods:
                out.update(mod.params())
        out.update(self.tail.params())
        return out

    def forward(self, x):
        """Restore a batch: returns (y_hat, U_list, S_list), finest first."""
        if x.data.ndim != 4:
            raise ValueError(f"forward expects (B, H, W, 3), got shape {x.shape}")
        _check_dims(x.data.shape[1], x.data.shape[2], self.scales)
        h = self.head(x)
        skips = []
        for s in range(self.scales):
            h = self.enc[s](h)
            skips.append(h)
            if s < self.scales - 1:
                h = self.down[s](h)
        junc = [self.junctions[s](skips[s]) for s in range(self.scales)]
        u_list = [j[1] for j in junc]
        s_list = [j[2] for j in junc]
        d = None
        for s in range(self.scales - 1, -1, -1):
            f = junc[s][0]
            if d is not None:
                f = f + upsample_nearest2x(self.up[s](d))
            d = self.dec[s](f)
        y_hat = x + self.tail(d)
        return y_hat, u_list, s_list

    def restore_image(self, img):
        """Forward one (H, W, 3) float image without a graph; clamps output."""
        with no_grad():
            x = Tensor(np.asarray(img, dtype=self.dtype)[None])
            y_hat, _, _ = self.forward(x)
        return np.clip(y_hat.data[0].astype(np.float64), 0.0, 1.0)

    def affinity_matrix(self, img):
        """Finest-scale affinity matrix (HW, N) for one image."""
        if self.variant == "no_dq":
            raise ValueError("no_dq variant has no affinity matrix")
        with no_grad():
            x = Tensor(np.asarray(img, dtype=self.dtype)[None])
            _, _, s_list = self.forward(x)
        return s_list[0].data[0].astype(np.float64)


class DegradeModel:
    """Light encoder + one injection + decoder; re-degrades clean images."""

    def __init__(self, channels=16, rank=4, seed=0, dtype=np.float32, variant="full"):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xDE]))
        self.channels = channels
        self.variant = variant
        self.dtype = dtype
        self.head = Conv3x3(3, channels, rng, dtype, "head")
        self.enc = Block(channels, rng, dtype, "enc")
        self.di = None
        self.mix3 = None
        self.mix_cat = None
        if variant == "no_di":
            self.mix3 = Conv3x3(channels, channels, rng, dtype, "mix3")
        elif variant == "no_cp":
            self.mix_cat = Conv1x1(2 * channels, channels, rng, dtype, "mix_cat")
        else:
            self.di = DiModule(rank, rng, dtype, name="di")
        self.dec = Block(channels, rng, dtype, "dec")
        self.tail = Conv3x3(channels, 3, rng, dtype, "tail", zero_init=True)

    def params(self):
        out = {}
        out.update(self.head.params())
        out.update(self.enc.params())
        for mod in (self.di, self.mix3, self.mix_cat):
            if mod is not None:
                out.update(mod.params())
        out.update(self.dec.params())
        out.update(self.tail.params())
        return out

    def forward(self, y, u_list):
        """Degrade a clean batch conditioned on the finest-scale U."""
        if y.data.ndim != 4:
            raise ValueError(f"forward expects (B, H, W, 3), got shape {y.shape}")
        if not u_list:
            raise ValueError("degrade forward needs the queried degradation list")
        u = u_list[0]
        if u.data.shape[:3] != y.data.shape[:3] or u.data.shape[3] != self.channels:
            raise ValueError(f"finest-scale U shape {u.shape} does not match input {y.shape} "
                             f"with {self.channels} channels")
        h = self.enc(self.head(y))
        if self.di is not None:
            h = self.di(h, u)
        elif self.mix_cat is not None:
            h = concat_mix(h, u, self.mix_cat.w, self.mix_cat.b)
        else:
            h = self.mix3(h) + h
        h = self.dec(h)
        return y + self.tail(h)


def count_params(model):
    """Exact count of learnable scalars."""
    return sum(int(t.data.size) for t in model.params().values())


def ndr_parameter_count(model):
    """Scalars in the dictionary plus the query machinery (or its stand-in)."""
    total = 0
    for name, t in model.params().items():
        if name == "ndr.D" or ".dq." in name or ".u_conv." in name:
            total += int(t.data.size)
    return total


def joint_params(restore, degrad):
    """Single optimizer view over both networks (dictionary included once)."""
    out = {}
    for name, t in restore.params().items():
        out[f"restore/{name}"] = t
    for name, t in degrad.params().items():
        out[f"degrad/{name}"] = t
    return out
