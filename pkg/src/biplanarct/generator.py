"""The reconstruction generator.

Two parallel 2D dense-block encoders (one per X-ray view, same architecture,
separate weights) feed a 3D decoder. Each 2D feature map is lifted to 3D by
tiling along its view's projection axis so both lifted tensors live in the
unified (z, y, x) order. The deepest features fuse by addition; every
shallower decoder level runs the attention fusion:

  view-attention: each view's shallow features are correlated with the
  deeper decoder features, a 2-channel mixture conv + channel softmax yields
  one spatial weight map per view, and the weighted sum gives coarse fused
  features;
  fine distillation: a sigmoid gate conditioned on (coarse, deep) features
  rescales the coarse features into fine features;
  the ensemble concat(coarse, fine, view-sum, deep) is convolved and
  up-convolved to the next resolution.

``fusion="add"`` drops the attention path (ensemble = concat(view-sum, deep))
for ablation runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tensor,
    add,
    concat_channels,
    conv3d,
    expand_repeat,
    mul,
    sigmoid,
    slice_channels,
    softmax_channel,
)
from .nn import ParamBank, conv2d_block, conv3d_block, upconv3d_block

PARAM_PREFIX = "gen."


@dataclass
class GeneratorConfig:
    levels: int = 3
    base_channels: int = 16
    growth: int = 8
    dense_layers_per_block: int = 2
    volume_size: int = 32
    final_activation: str = "sigmoid"
    fusion: str = "cvaa"  # "cvaa" | "add"

    def __post_init__(self):
        if self.volume_size % (2 ** self.levels) != 0:
            raise ValueError("volume_size %s not divisible by 2^levels (%s)"
                             % (self.volume_size, 2 ** self.levels))
        for name in ("levels", "base_channels", "growth", "dense_layers_per_block"):
            if getattr(self, name) < 1:
                raise ValueError("%s must be >= 1" % name)
        if self.fusion not in ("cvaa", "add"):
            raise ValueError("fusion must be 'cvaa' or 'add', got %r" % self.fusion)

    def channels(self, level: int) -> int:
        """Feature width at encoder/decoder level (level 0 = full resolution)."""
        return self.base_channels * (2 ** max(level - 1, 0))


# projection axis each view's features are tiled along, as a spatial position
# in the unified (z, y, x) order: frontal (z, x) images gain y at position 1,
# lateral (z, y) images gain x at position 2.
LIFT_AXIS = {"frontal": 1, "lateral": 2}


def feat2d_encode(image, bank, cfg: GeneratorConfig, view: str):
    """Dense-block 2D encoder; returns one feature map per level (extent V/2^l)."""
    V = cfg.volume_size
    if image.shape[2:] != (V, V):
        raise ValueError("encoder expects %sx%s input images, got %s"
                         % (V, V, image.shape[2:]))
    prefix = "enc.%s." % view
    x = conv2d_block(image, bank, prefix + "stem", cfg.base_channels)
    feats = []
    for level in range(1, cfg.levels + 1):
        for j in range(cfg.dense_layers_per_block):
            y = conv2d_block(x, bank, prefix + "l%d.d%d" % (level, j), cfg.growth)
            x = concat_channels([x, y])
        x = conv2d_block(x, bank, prefix + "l%d.down" % level,
                         cfg.channels(level), stride=2)
        feats.append(x)
    return feats


def lift_to_unified(feat2d, bank, cfg: GeneratorConfig, view: str, level: int):
    """Tile a 2D feature map along the view's projection axis, then convolve."""
    if view not in LIFT_AXIS:
        raise ValueError("view must be 'frontal' or 'lateral', got %r" % view)
    extent = feat2d.shape[2]
    lifted = expand_repeat(feat2d, LIFT_AXIS[view], extent)
    return conv3d_block(lifted, bank, "lift.%s.l%d" % (view, level),
                        cfg.channels(level))


def bottleneck_fuse(s1, s2, bank, cfg: GeneratorConfig):
    """Addition fusion of the deepest view features, conv, then up-convolution."""
    if s1.shape != s2.shape:
        raise ValueError("bottleneck features differ in shape: %s vs %s"
                         % (s1.shape, s2.shape))
    x = conv3d_block(add(s1, s2), bank, "bottleneck.conv", cfg.channels(cfg.levels))
    return upconv3d_block(x, bank, "bottleneck.up", cfg.channels(cfg.levels - 1))


def vaa_fuse(s1, s2, deep, bank, cfg: GeneratorConfig, level: int):
    """View attention: softmax-weighted per-voxel blend of the two view features.

    Returns (coarse, weights) where weights is the 2-channel softmax map.
    """
    if s1.shape != s2.shape:
        raise ValueError("view features differ in shape: %s vs %s"
                         % (s1.shape, s2.shape))
    if s1.shape[2:] != deep.shape[2:]:
        raise ValueError("deep features spatial extent %s does not match views %s"
                         % (deep.shape[2:], s1.shape[2:]))
    ch = s1.shape[1]
    prefix = "dec.l%d." % level
    a1 = conv3d_block(concat_channels([s1, deep]), bank, prefix + "att1", ch)
    a2 = conv3d_block(concat_channels([s2, deep]), bank, prefix + "att2", ch)
    mix_in = concat_channels([a1, a2])
    w = bank.get(prefix + "mix.w", (2, mix_in.shape[1], 7, 7, 7), "normal")
    b = bank.get(prefix + "mix.b", (2,), "zeros")
    weights = softmax_channel(conv3d(mix_in, w, b, 1, 3))
    w1 = slice_channels(weights, 0, 1)
    w2 = slice_channels(weights, 1, 2)
    coarse = add(mul(s1, w1), mul(s2, w2))
    return coarse, weights


def fine_distill(coarse, deep, bank, level: int):
    """Sigmoid gate conditioned on (coarse, deep); returns (fine, gate)."""
    if coarse.shape[2:] != deep.shape[2:]:
        raise ValueError("coarse/deep spatial mismatch: %s vs %s"
                         % (coarse.shape, deep.shape))
    prefix = "dec.l%d." % level
    cin = coarse.shape[1] + deep.shape[1]
    w = bank.get(prefix + "gate.w", (1, cin, 3, 3, 3), "normal")
    b = bank.get(prefix + "gate.b", (1,), "zeros")
    gate = sigmoid(conv3d(concat_channels([coarse, deep]), w, b, 1, 1))
    return mul(coarse, gate), gate


def decoder_level(s1, s2, deep, bank, cfg: GeneratorConfig, level: int):
    """One decoder stage; output has double the spatial extent."""
    if cfg.fusion == "cvaa":
        coarse, _ = vaa_fuse(s1, s2, deep, bank, cfg, level)
        fine, _ = fine_distill(coarse, deep, bank, level)
        ensemble = concat_channels([coarse, fine, add(s1, s2), deep])
    else:
        ensemble = concat_channels([add(s1, s2), deep])
    x = conv3d_block(ensemble, bank, "dec.l%d.conv" % level, cfg.channels(level))
    return upconv3d_block(x, bank, "dec.l%d.up" % level, cfg.channels(level - 1))


class Generator:
    """Builds all parameters at construction via one dummy forward pass."""

    def __init__(self, config: GeneratorConfig, seed: int = 0):
        self.config = config
        self.bank = ParamBank(np.random.default_rng(seed))
        V = config.volume_size
        dummy = np.zeros((1, 1, V, V), dtype=np.float32)
        self.forward(dummy, dummy)
        self.bank.freeze()

    def forward(self, frontal, lateral):
        """frontal/lateral: (N, 1, V, V) arrays or tensors -> (N, 1, V, V, V)."""
        cfg = self.config
        bank = self.bank
        frontal = frontal if isinstance(frontal, Tensor) else Tensor(frontal)
        lateral = lateral if isinstance(lateral, Tensor) else Tensor(lateral)

        f_feats = feat2d_encode(frontal, bank, cfg, "frontal")
        l_feats = feat2d_encode(lateral, bank, cfg, "lateral")
        s1 = [lift_to_unified(f, bank, cfg, "frontal", l + 1)
              for l, f in enumerate(f_feats)]
        s2 = [lift_to_unified(f, bank, cfg, "lateral", l + 1)
              for l, f in enumerate(l_feats)]

        deep = bottleneck_fuse(s1[-1], s2[-1], bank, cfg)
        for level in range(cfg.levels - 1, 0, -1):
            deep = decoder_level(s1[level - 1], s2[level - 1], deep, bank, cfg, level)

        w = bank.get("head.w", (1, deep.shape[1], 3, 3, 3), "normal")
        b = bank.get("head.b", (1,), "zeros")
        out = conv3d(deep, w, b, 1, 1)
        if cfg.final_activation == "sigmoid":
            out = sigmoid(out)
        return out

    def n_params(self) -> int:
        return self.bank.n_params()
