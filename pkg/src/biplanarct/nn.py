"""Parameter management and the shared convolution building blocks.

Parameters live in a :class:`ParamBank` keyed by path-like names
("dec.l2.mix.w"). A bank in build mode (constructed with an rng) creates
parameters on first access; a frozen bank validates shapes instead, so one
dummy forward pass at network construction pins every name and shape and any
later mismatch fails loudly.

Initialization: conv weights ~ N(0, 0.02^2), biases and norm shifts zero,
norm scales one. GAN training is sensitive to this, hence it is fixed here
rather than left to callers.
"""

from __future__ import annotations

import numpy as np

from .autodiff import (
    Tensor,
    conv2d,
    conv3d,
    conv_transpose3d,
    instance_norm,
    leaky_relu,
    relu,
    sigmoid,
)

INIT_STD = 0.02


class ParamBank:
    def __init__(self, rng: np.random.Generator | None = None):
        self._rng = rng
        self.tensors: dict[str, Tensor] = {}

    def get(self, name: str, shape: tuple, init: str) -> Tensor:
        if name in self.tensors:
            t = self.tensors[name]
            if t.shape != tuple(shape):
                raise ValueError("parameter %r has shape %s, requested %s"
                                 % (name, t.shape, tuple(shape)))
            return t
        if self._rng is None:
            raise KeyError("unknown parameter %r (bank is frozen)" % name)
        if init == "normal":
            data = self._rng.normal(0.0, INIT_STD, size=shape)
        elif init == "zeros":
            data = np.zeros(shape)
        elif init == "ones":
            data = np.ones(shape)
        else:
            raise ValueError("unknown init %r" % init)
        t = Tensor(data.astype(np.float32), requires_grad=True)
        self.tensors[name] = t
        return t

    def freeze(self):
        self._rng = None

    def zero_grads(self):
        for t in self.tensors.values():
            t.grad = None

    def n_params(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def state(self) -> dict:
        return {name: t.data for name, t in self.tensors.items()}

    def load_state(self, arrays: dict):
        missing = set(self.tensors) - set(arrays)
        extra = set(arrays) - set(self.tensors)
        if missing or extra:
            raise ValueError("parameter name mismatch: missing %s, unexpected %s"
                             % (sorted(missing), sorted(extra)))
        for name, arr in arrays.items():
            t = self.tensors[name]
            if t.shape != arr.shape:
                raise ValueError("parameter %r: checkpoint shape %s != model shape %s"
                                 % (name, arr.shape, t.shape))
            t.data = np.asarray(arr, dtype=np.float32).copy()


def _activate(y, act, alpha):
    if act == "relu":
        return relu(y)
    if act == "leaky_relu":
        return leaky_relu(y, alpha)
    if act == "sigmoid":
        return sigmoid(y)
    if act is None:
        return y
    raise ValueError("unknown activation %r" % act)


def conv2d_block(x, bank, name, cout, k=3, stride=1, pad=1, norm=True,
                 act="relu", alpha=0.2):
    cin = x.shape[1]
    w = bank.get(name + ".w", (cout, cin, k, k), "normal")
    b = bank.get(name + ".b", (cout,), "zeros")
    y = conv2d(x, w, b, stride, pad)
    if norm:
        y = instance_norm(y, bank.get(name + ".gamma", (cout,), "ones"),
                          bank.get(name + ".beta", (cout,), "zeros"))
    return _activate(y, act, alpha)


def conv3d_block(x, bank, name, cout, k=3, stride=1, pad=1, norm=True,
                 act="relu", alpha=0.2):
    cin = x.shape[1]
    w = bank.get(name + ".w", (cout, cin, k, k, k), "normal")
    b = bank.get(name + ".b", (cout,), "zeros")
    y = conv3d(x, w, b, stride, pad)
    if norm:
        y = instance_norm(y, bank.get(name + ".gamma", (cout,), "ones"),
                          bank.get(name + ".beta", (cout,), "zeros"))
    return _activate(y, act, alpha)


def upconv3d_block(x, bank, name, cout, norm=True, act="relu"):
    """Transposed conv k=4, s=2, p=1: doubles every spatial extent."""
    cin = x.shape[1]
    w = bank.get(name + ".w", (cin, cout, 4, 4, 4), "normal")
    b = bank.get(name + ".b", (cout,), "zeros")
    y = conv_transpose3d(x, w, b, 2, 1)
    if norm:
        y = instance_norm(y, bank.get(name + ".gamma", (cout,), "ones"),
                          bank.get(name + ".beta", (cout,), "zeros"))
    return _activate(y, act, 0.2)
