"""Differentiable operations over :class:`~biplanarct.autodiff.tensor.Tensor`.

The operator set is exactly what the reconstruction networks need: elementwise
maps, channel softmax, concatenation, instance norm, tiling/permutation for the
2D-to-3D lifting, mean reduction, and the 2D/3D (transposed) convolutions.

Broadcasting is deliberately restricted: binary ops accept equal shapes or a
single-channel gate ``(N, 1, *spatial)`` against ``(N, C, *spatial)``. Anything
else raises, loudly, with both shapes in the message.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, make_op
from .conv import (
    conv_forward,
    conv_input_grad,
    conv_weight_grad,
    convt_forward,
    convt_weight_grad,
)


class ShapeError(ValueError):
    """Raised when operand shapes violate an op's contract."""


def _check(cond, msg, *args):
    if not cond:
        raise ShapeError(msg % args)


# ---------------------------------------------------------------------------
# binary elementwise

def _gate_kind(a: Tensor, b: Tensor) -> str:
    """'equal', or 'gate' when b is (N,1,*spatial) against a's (N,C,*spatial)."""
    if a.shape == b.shape:
        return "equal"
    if (len(a.shape) == len(b.shape) >= 3 and b.shape[1] == 1
            and a.shape[0] == b.shape[0] and a.shape[2:] == b.shape[2:]):
        return "gate"
    raise ShapeError(
        "shapes %s and %s are neither equal nor a single-channel gate"
        % (a.shape, b.shape))


def add(a: Tensor, b: Tensor) -> Tensor:
    kind = _gate_kind(a, b)

    def vjp(g):
        gb = g if kind == "equal" else g.sum(axis=1, keepdims=True)
        return g, gb

    return make_op("add", a.data + b.data, (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    kind = _gate_kind(a, b)

    def vjp(g):
        gb = -g if kind == "equal" else -g.sum(axis=1, keepdims=True)
        return g, gb

    return make_op("sub", a.data - b.data, (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; b may be a single-channel gate broadcast over a's channels."""
    kind = _gate_kind(a, b)
    ad, bd = a.data, b.data

    def vjp(g):
        gb = g * ad
        if kind == "gate":
            gb = gb.sum(axis=1, keepdims=True)
        return g * bd, gb

    return make_op("mul", ad * bd, (a, b), vjp)


def shift(a: Tensor, c: float) -> Tensor:
    """a + c for a python scalar c."""
    return make_op("shift", a.data + a.dtype.type(c), (a,), lambda g: (g,))


def scale(a: Tensor, c: float) -> Tensor:
    c = a.dtype.type(c)
    return make_op("scale", a.data * c, (a,), lambda g: (g * c,))


# ---------------------------------------------------------------------------
# pointwise nonlinearities

def relu(x: Tensor) -> Tensor:
    mask = x.data > 0  # subgradient at 0 is 0
    return make_op("relu", np.where(mask, x.data, 0), (x,), lambda g: (g * mask,))


def leaky_relu(x: Tensor, alpha: float = 0.2) -> Tensor:
    slope = np.where(x.data > 0, x.dtype.type(1), x.dtype.type(alpha))
    return make_op("leaky_relu", x.data * slope, (x,), lambda g: (g * slope,))


def sigmoid(x: Tensor) -> Tensor:
    xd = x.data
    y = np.empty_like(xd)
    pos = xd >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    y[~pos] = ex / (1.0 + ex)
    return make_op("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))


def pointwise(x: Tensor, kind: str, alpha: float = 0.2) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "leaky_relu":
        return leaky_relu(x, alpha)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError("unknown pointwise kind %r" % kind)


def softmax_channel(x: Tensor) -> Tensor:
    """Softmax along axis 1 (channels), max-shifted for overflow safety."""
    _check(len(x.shape) >= 2, "softmax_channel needs a channel axis, got shape %s", x.shape)
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return make_op("softmax_channel", y, (x,), vjp)


# ---------------------------------------------------------------------------
# structural ops

def concat_channels(inputs) -> Tensor:
    inputs = list(inputs)
    _check(len(inputs) >= 1, "concat_channels needs at least one input")
    first = inputs[0]
    for t in inputs[1:]:
        _check(t.shape[0] == first.shape[0] and t.shape[2:] == first.shape[2:],
               "concat_channels: batch/spatial mismatch %s vs %s", first.shape, t.shape)
    sizes = [t.shape[1] for t in inputs]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(g[:, offsets[i]:offsets[i + 1]] for i in range(len(inputs)))

    return make_op("concat_channels", np.concatenate([t.data for t in inputs], axis=1),
                   inputs, vjp)


def slice_channels(x: Tensor, lo: int, hi: int) -> Tensor:
    """View of channels [lo, hi); the gradient scatters back into a zero buffer."""
    _check(0 <= lo < hi <= x.shape[1],
           "slice_channels: [%s, %s) invalid for %s channels", lo, hi, x.shape[1])

    def vjp(g):
        gx = np.zeros(x.shape, dtype=g.dtype)
        gx[:, lo:hi] = g
        return (gx,)

    return make_op("slice_channels", x.data[:, lo:hi].copy(), (x,), vjp)


def expand_repeat(x: Tensor, axis_position: int, repeats: int) -> Tensor:
    """Insert a new spatial axis at ``axis_position`` (0-based among spatial axes)
    and tile the input ``repeats`` times along it."""
    n_spatial = len(x.shape) - 2
    _check(0 <= axis_position <= n_spatial,
           "expand_repeat: axis_position %s out of range for %s spatial axes",
           axis_position, n_spatial)
    _check(repeats >= 1, "expand_repeat: repeats must be >= 1, got %s", repeats)
    ax = 2 + axis_position
    data = np.repeat(np.expand_dims(x.data, ax), repeats, axis=ax)

    def vjp(g):
        return (g.sum(axis=ax),)

    return make_op("expand_repeat", data, (x,), vjp)


def permute_axes(x: Tensor, order) -> Tensor:
    order = tuple(order)
    _check(sorted(order) == list(range(len(x.shape))),
           "permute_axes: %s is not a permutation of axes of shape %s", order, x.shape)
    inverse = tuple(np.argsort(order))

    def vjp(g):
        return (np.transpose(g, inverse),)

    return make_op("permute_axes", np.ascontiguousarray(np.transpose(x.data, order)),
                   (x,), vjp)


def reduce_mean(x: Tensor, axes=None) -> Tensor:
    """Mean over the given axes (all axes when None). ``axes=()`` is the identity."""
    if axes is None:
        axes = tuple(range(len(x.shape)))
    else:
        axes = tuple(int(a) for a in axes)
    if not axes:
        return make_op("reduce_mean", x.data.copy(), (x,), lambda g: (g,))
    shape = x.shape
    count = int(np.prod([shape[a] for a in axes]))
    data = x.data.mean(axis=axes)

    def vjp(g):
        gexp = np.expand_dims(g, axes)
        return (np.broadcast_to(gexp / count, shape).astype(x.dtype, copy=False),)

    return make_op("reduce_mean", data, (x,), vjp)


def reduce_sum(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(range(len(x.shape)))
    else:
        axes = tuple(int(a) for a in axes)
    if not axes:
        return make_op("reduce_sum", x.data.copy(), (x,), lambda g: (g,))
    shape = x.shape
    data = x.data.sum(axis=axes)

    def vjp(g):
        gexp = np.expand_dims(g, axes)
        return (np.broadcast_to(gexp, shape).astype(x.dtype, copy=False),)

    return make_op("reduce_sum", data, (x,), vjp)


def instance_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-(sample, channel) normalization over the spatial axes, then affine."""
    _check(len(x.shape) >= 3, "instance_norm needs spatial axes, got shape %s", x.shape)
    C = x.shape[1]
    _check(gamma.shape == (C,) and beta.shape == (C,),
           "instance_norm: gamma/beta must have shape (%s,), got %s and %s",
           C, gamma.shape, beta.shape)
    spatial = tuple(range(2, len(x.shape)))
    m = int(np.prod([x.shape[a] for a in spatial]))
    _check(m >= 2, "instance_norm: spatial volume must be >= 2, got %s", m)

    mu = x.data.mean(axis=spatial, keepdims=True)
    var = x.data.var(axis=spatial, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    gshape = (1, C) + (1,) * len(spatial)
    out = xhat * gamma.data.reshape(gshape) + beta.data.reshape(gshape)

    def vjp(g):
        gg = gamma.data.reshape(gshape)
        gx_hat = g * gg
        # d/dx of (x - mu) / sqrt(var + eps), per (n, c)
        mean_g = gx_hat.mean(axis=spatial, keepdims=True)
        mean_gx = (gx_hat * xhat).mean(axis=spatial, keepdims=True)
        gx = inv * (gx_hat - mean_g - xhat * mean_gx)
        sum_axes = (0,) + spatial
        ggamma = (g * xhat).sum(axis=sum_axes)
        gbeta = g.sum(axis=sum_axes)
        return gx.astype(x.dtype, copy=False), ggamma, gbeta

    return make_op("instance_norm", out.astype(x.dtype, copy=False),
                   (x, gamma, beta), vjp)


# ---------------------------------------------------------------------------
# convolutions

def _conv_nd(x: Tensor, weight: Tensor, bias: Tensor, stride: int, padding: int,
             n_spatial: int, name: str) -> Tensor:
    _check(len(x.shape) == 2 + n_spatial,
           "%s: input must be (N, C, %s spatial axes), got shape %s",
           name, n_spatial, x.shape)
    _check(len(weight.shape) == 2 + n_spatial,
           "%s: weight must have %s axes, got shape %s", name, 2 + n_spatial, weight.shape)
    _check(x.shape[1] == weight.shape[1],
           "%s: input channels %s do not match weight's expected %s (weight shape %s)",
           name, x.shape[1], weight.shape[1], weight.shape)
    _check(bias.shape == (weight.shape[0],),
           "%s: bias shape %s does not match out channels %s", name, bias.shape,
           weight.shape[0])
    _check(stride >= 1, "%s: stride must be >= 1, got %s", name, stride)
    for ext, k in zip(x.shape[2:], weight.shape[2:]):
        _check(ext + 2 * padding >= k,
               "%s: spatial extent %s + 2*padding %s smaller than kernel %s",
               name, ext, padding, k)

    y = conv_forward(x.data, weight.data, stride, padding)
    bshape = (1, -1) + (1,) * n_spatial
    y = y + bias.data.reshape(bshape)
    in_spatial = x.shape[2:]
    ch_axes = (0,) + tuple(range(2, 2 + n_spatial))

    def vjp(g):
        gx = conv_input_grad(g, weight.data, stride, padding, in_spatial)
        gw = conv_weight_grad(x.data, g, stride, padding, weight.shape)
        gb = g.sum(axis=ch_axes)
        return gx, gw, gb

    return make_op(name, y, (x, weight, bias), vjp)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1,
           padding: int = 0) -> Tensor:
    """Cross-correlation (deep-learning convention) over 2 spatial axes."""
    return _conv_nd(x, weight, bias, stride, padding, 2, "conv2d")


def conv3d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1,
           padding: int = 0) -> Tensor:
    """Cross-correlation (deep-learning convention) over 3 spatial axes."""
    return _conv_nd(x, weight, bias, stride, padding, 3, "conv3d")


def conv_transpose3d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1,
                     padding: int = 0) -> Tensor:
    """Transposed 3D convolution; weight layout (Cin, Cout, kd, kh, kw).

    Adjoint of conv3d with the same weight array: for x of matching shapes,
    <conv3d(a, w), b> == <a, conv_transpose3d(b, w)>.
    Output extent per axis is (in - 1) * stride - 2 * padding + k.
    """
    _check(len(x.shape) == 5, "conv_transpose3d: input must be 5D, got shape %s", x.shape)
    _check(len(weight.shape) == 5,
           "conv_transpose3d: weight must be 5D (Cin,Cout,kd,kh,kw), got %s", weight.shape)
    _check(x.shape[1] == weight.shape[0],
           "conv_transpose3d: input channels %s do not match weight Cin %s",
           x.shape[1], weight.shape[0])
    _check(bias.shape == (weight.shape[1],),
           "conv_transpose3d: bias shape %s does not match out channels %s",
           bias.shape, weight.shape[1])
    _check(stride >= 1, "conv_transpose3d: stride must be >= 1, got %s", stride)
    for ext, k in zip(x.shape[2:], weight.shape[2:]):
        _check((ext - 1) * stride - 2 * padding + k >= 1,
               "conv_transpose3d: output extent would be empty (in=%s, k=%s)", ext, k)

    y = convt_forward(x.data, weight.data, stride, padding)
    y = y + bias.data.reshape((1, -1, 1, 1, 1))

    def vjp(g):
        # adjoint of the adjoint: a plain convolution; the (Cin, Cout) weight
        # layout is already the conv layout of the reverse direction
        gx = conv_forward(g, weight.data, stride, padding)
        gw = convt_weight_grad(x.data, g, stride, padding, weight.shape)
        gb = g.sum(axis=(0, 2, 3, 4))
        return gx, gw, gb

    return make_op("conv_transpose3d", y, (x, weight, bias), vjp)
