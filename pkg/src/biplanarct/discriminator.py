"""Conditional 3D patch discriminator.

Scores (biplanar X-rays, candidate volume) pairs with a spatial grid of
patch scores. The X-ray condition enters the same way the generator lifts
its features: each image is tiled along its projection axis into the unified
(z, y, x) order and passed through one convolution. Least-squares targets
mean there is no terminal activation; scores are unbounded reals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, concat_channels, conv3d, expand_repeat, leaky_relu
from .generator import LIFT_AXIS
from .nn import ParamBank, conv3d_block

PARAM_PREFIX = "disc."


@dataclass
class DiscriminatorConfig:
    layers: int = 3
    base_channels: int = 32
    leaky_slope: float = 0.2
    cond_channels: int = 8
    volume_size: int = 32

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.volume_size // (2 ** self.layers) < 1:
            raise ValueError("patch map would be empty: volume %s with %s layers"
                             % (self.volume_size, self.layers))

    @property
    def patch_extent(self) -> int:
        return self.volume_size // (2 ** self.layers)


def condition_lift(frontal, lateral, bank, cfg: DiscriminatorConfig):
    """Lift both X-rays to 3D condition features, concatenated on channels."""
    V = cfg.volume_size
    for name, img in (("frontal", frontal), ("lateral", lateral)):
        if img.shape[2:] != (V, V):
            raise ValueError("%s image extent %s does not match volume size %s"
                             % (name, img.shape[2:], V))
    branches = []
    for view, img in (("frontal", frontal), ("lateral", lateral)):
        lifted = expand_repeat(img, LIFT_AXIS[view], V)
        w = bank.get("cond.%s.w" % view, (cfg.cond_channels, img.shape[1], 3, 3, 3),
                     "normal")
        b = bank.get("cond.%s.b" % view, (cfg.cond_channels,), "zeros")
        branches.append(leaky_relu(conv3d(lifted, w, b, 1, 1), cfg.leaky_slope))
    return concat_channels(branches)


class Discriminator:
    def __init__(self, config: DiscriminatorConfig, seed: int = 0):
        self.config = config
        self.bank = ParamBank(np.random.default_rng(seed))
        V = config.volume_size
        img = np.zeros((1, 1, V, V), dtype=np.float32)
        vol = np.zeros((1, 1, V, V, V), dtype=np.float32)
        self.forward(img, img, vol)
        self.bank.freeze()

    def forward(self, frontal, lateral, volume):
        """Returns the patch score map (N, 1, V/2^layers, ...)."""
        cfg = self.config
        bank = self.bank
        frontal = frontal if isinstance(frontal, Tensor) else Tensor(frontal)
        lateral = lateral if isinstance(lateral, Tensor) else Tensor(lateral)
        volume = volume if isinstance(volume, Tensor) else Tensor(volume)
        V = cfg.volume_size
        if volume.shape[1:] != (1, V, V, V):
            raise ValueError("volume shape %s does not match (N, 1, %s, %s, %s)"
                             % (volume.shape, V, V, V))

        cond = condition_lift(frontal, lateral, bank, cfg)
        x = concat_channels([cond, volume])
        for i in range(cfg.layers):
            # no normalization anywhere in the body: instance norm couples
            # every voxel through its statistics and would break the strict
            # patch-locality contract (each score a function of its receptive
            # field only)
            x = conv3d_block(x, bank, "body.l%d" % i, cfg.base_channels * (2 ** i),
                             k=4, stride=2, pad=1, norm=False,
                             act="leaky_relu", alpha=cfg.leaky_slope)
        w = bank.get("body.out.w", (1, x.shape[1], 3, 3, 3), "normal")
        b = bank.get("body.out.b", (1,), "zeros")
        return conv3d(x, w, b, 1, 1)

    def n_params(self) -> int:
        return self.bank.n_params()
