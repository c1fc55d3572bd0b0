from .tensor import Tensor, as_tensor, backward
from .ops import (
    ShapeError,
    add,
    concat_channels,
    conv2d,
    conv3d,
    conv_transpose3d,
    expand_repeat,
    instance_norm,
    leaky_relu,
    mul,
    permute_axes,
    pointwise,
    reduce_mean,
    reduce_sum,
    relu,
    scale,
    shift,
    sigmoid,
    slice_channels,
    softmax_channel,
    sub,
)
from .gradcheck import GradCheckReport, grad_check

__all__ = [
    "Tensor", "as_tensor", "backward", "ShapeError",
    "add", "sub", "mul", "shift", "scale",
    "relu", "leaky_relu", "sigmoid", "pointwise", "softmax_channel",
    "concat_channels", "slice_channels", "expand_repeat", "permute_axes",
    "reduce_mean", "reduce_sum", "instance_norm",
    "conv2d", "conv3d", "conv_transpose3d",
    "grad_check", "GradCheckReport",
]
