"""Raw convolution kernels shared by the 2D/3D (transposed) conv ops.

All functions take plain ndarrays in (N, C, *spatial) layout with 2 or 3
spatial axes, square stride/padding, and the cross-correlation convention.

The dense arithmetic is delegated to torch's CPU kernels (functional conv
plus the explicit input/weight gradient helpers) the same way matrix code
delegates to BLAS: no torch autograd graph is ever built, tensors cross the
boundary as zero-copy views, and float64 passes through untouched so the
gradient checker keeps its precision. Correctness is pinned independently by
brute-force direct-summation oracles in the test suite.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch.nn import grad as tgrad

torch.set_num_threads(max(torch.get_num_threads(), 1))


def _t(x):
    return torch.from_numpy(np.ascontiguousarray(x))


def _pair(a, b):
    """Promote two arrays to their common dtype (numpy rules); torch refuses
    mixed f32/f64 operands, which show up when only part of a model runs in
    the checker's float64 mode."""
    dt = np.result_type(a.dtype, b.dtype)
    return _t(a.astype(dt, copy=False)), _t(b.astype(dt, copy=False))


def conv_forward(x, w, stride, padding):
    fn = F.conv3d if x.ndim == 5 else F.conv2d
    tx, tw = _pair(x, w)
    with torch.no_grad():
        y = fn(tx, tw, stride=stride, padding=padding)
    return y.numpy()


def conv_input_grad(gy, w, stride, padding, in_spatial):
    """Gradient w.r.t. the conv input; ``in_spatial`` fixes the output size
    (stride may not divide the input extent evenly)."""
    fn = tgrad.conv3d_input if gy.ndim == 5 else tgrad.conv2d_input
    size = (gy.shape[0], w.shape[1]) + tuple(in_spatial)
    tw, tg = _pair(w, gy)
    with torch.no_grad():
        gx = fn(size, tw, tg, stride=stride, padding=padding)
    return gx.numpy()


def conv_weight_grad(x, gy, stride, padding, w_shape):
    fn = tgrad.conv3d_weight if x.ndim == 5 else tgrad.conv2d_weight
    tx, tg = _pair(x, gy)
    with torch.no_grad():
        gw = fn(tx, tuple(w_shape), tg, stride=stride, padding=padding)
    return gw.numpy()


def convt_forward(x, w, stride, padding):
    """Transposed conv forward; w layout (Cin, Cout, *k)."""
    fn = F.conv_transpose3d if x.ndim == 5 else F.conv_transpose2d
    tx, tw = _pair(x, w)
    with torch.no_grad():
        y = fn(tx, tw, stride=stride, padding=padding)
    return y.numpy()


def convt_weight_grad(x, gy, stride, padding, w_shape):
    """Weight gradient of the transposed conv.

    The transposed conv is the input-gradient of a plain conv, so its weight
    gradient is the plain conv weight gradient with the roles of the
    activations swapped: correlate gy (as conv input) against x (as upstream).
    """
    fn = tgrad.conv3d_weight if x.ndim == 5 else tgrad.conv2d_weight
    # conv weight layout for the reverse direction is (Cin_t, Cout_t, *k),
    # which is exactly the transposed-conv layout
    tg, tx = _pair(gy, x)
    with torch.no_grad():
        gw = fn(tg, tuple(w_shape), tx, stride=stride, padding=padding)
    return gw.numpy()
