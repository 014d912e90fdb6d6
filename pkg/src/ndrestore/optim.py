"""Adam optimizer with bias correction and coupled L2 weight decay."""

from __future__ import annotations

import numpy as np


class AdamState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self, params):
        self.step = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8,
              weight_decay=0.0, names=None):
    """Apply one bias-corrected Adam update in place.

    Weight decay enters as an L2 term added to the gradient before the
    moment updates. A non-finite gradient aborts the whole step before
    any parameter is touched.
    """
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            label = names[i] if names else f"param[{i}]"
            raise FloatingPointError(f"non-finite gradient for {label}; step aborted")
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if weight_decay:
            g = g + weight_decay * p
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        mhat = m / bc1
        vhat = v / bc2
        p -= lr * mhat / (np.sqrt(vhat) + eps)


class Adam:
    """Optimizer over a name -> Tensor parameter dict."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=0.0):
        self.names = list(params.keys())
        self.params = [params[n] for n in self.names]
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = AdamState([p.data for p in self.params])

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data)
                 for p in self.params]
        adam_step([p.data for p in self.params], grads, self.state,
                  self.lr, self.beta1, self.beta2, self.eps,
                  self.weight_decay, names=self.names)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def state_tensors(self):
        """Moment buffers keyed for checkpointing."""
        out = {}
        for n, m, v in zip(self.names, self.state.m, self.state.v):
            out[f"adam.m/{n}"] = m
            out[f"adam.v/{n}"] = v
        return out

    def load_state_tensors(self, tensors, step):
        for i, n in enumerate(self.names):
            m = tensors.get(f"adam.m/{n}")
            v = tensors.get(f"adam.v/{n}")
            if m is None or v is None:
                raise KeyError(f"checkpoint is missing optimizer state for {n}")
            if m.shape != self.state.m[i].shape:
                raise ValueError(f"optimizer state shape mismatch for {n}")
            self.state.m[i] = m.astype(self.params[i].dtype)
            self.state.v[i] = v.astype(self.params[i].dtype)
        self.state.step = step
