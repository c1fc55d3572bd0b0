"""Registered gradient checks: one per differentiable op plus end-to-end
checks through the generator, the discriminator, and the combined objective
at reduced scale (8^3 volumes, 2 levels). All run in float64.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, grad_check
from .discriminator import Discriminator, DiscriminatorConfig
from .generator import Generator, GeneratorConfig
from .losses import LossWeights, lsgan_discriminator_loss, total_generator_loss

_R = lambda seed, *shape: np.random.default_rng(seed).standard_normal(shape)

# Deep relu stacks need a smaller probe step than the op-level default:
# a 1e-3 parameter perturbation routinely pushes some downstream
# pre-activation across its kink, which corrupts the central difference.
# In float64 the 1e-5 step still leaves ~1e-11 of roundoff headroom.
MODEL_EPS = 1e-5


def _scalar(x):
    return ad.reduce_mean(ad.mul(x, ad.shift(x, 0.3)))


OP_CHECKS = {
    "conv2d": (
        lambda t: _scalar(ad.conv2d(t["x"], t["w"], t["b"], 2, 1)),
        {"x": _R(1, 2, 2, 5, 5), "w": _R(2, 3, 2, 3, 3), "b": _R(3, 3)}),
    "conv3d": (
        lambda t: _scalar(ad.conv3d(t["x"], t["w"], t["b"], 1, 1)),
        {"x": _R(4, 2, 2, 4, 4, 4), "w": _R(5, 3, 2, 3, 3, 3), "b": _R(6, 3)}),
    "conv_transpose3d": (
        lambda t: _scalar(ad.conv_transpose3d(t["x"], t["w"], t["b"], 2, 1)),
        {"x": _R(7, 1, 2, 3, 3, 3), "w": _R(8, 2, 3, 4, 4, 4), "b": _R(9, 3)}),
    "relu": (
        lambda t: _scalar(ad.relu(t["x"])),
        {"x": _R(10, 3, 4) + 0.05}),  # keep probes away from the kink
    "leaky_relu": (
        lambda t: _scalar(ad.leaky_relu(t["x"], 0.2)),
        {"x": _R(11, 3, 4) + 0.05}),
    "sigmoid": (
        lambda t: _scalar(ad.sigmoid(t["x"])),
        {"x": _R(12, 3, 4)}),
    "softmax_channel": (
        lambda t: ad.reduce_mean(ad.mul(ad.softmax_channel(t["x"]), t["y"])),
        {"x": _R(13, 2, 3, 4, 4), "y": _R(14, 2, 3, 4, 4)}),
    "concat_channels": (
        lambda t: _scalar(ad.concat_channels([t["a"], t["b"]])),
        {"a": _R(15, 1, 2, 3, 3), "b": _R(16, 1, 3, 3, 3)}),
    "add": (
        lambda t: _scalar(ad.add(t["a"], t["b"])),
        {"a": _R(17, 2, 3, 4), "b": _R(18, 2, 3, 4)}),
    "mul_broadcast": (
        lambda t: _scalar(ad.mul(t["a"], t["g"])),
        {"a": _R(19, 2, 3, 4, 4), "g": _R(20, 2, 1, 4, 4)}),
    "instance_norm": (
        lambda t: _scalar(ad.instance_norm(t["x"], t["g"], t["b"])),
        {"x": _R(21, 2, 3, 4, 4), "g": _R(22, 3), "b": _R(23, 3)}),
    "expand_repeat": (
        lambda t: ad.reduce_mean(ad.mul(ad.expand_repeat(t["x"], 1, 4), t["y"])),
        {"x": _R(24, 1, 2, 4, 4), "y": _R(25, 1, 2, 4, 4, 4)}),
    "permute_axes": (
        lambda t: ad.reduce_mean(ad.mul(ad.permute_axes(t["x"], (0, 1, 4, 2, 3)),
                                        t["y"])),
        {"x": _R(26, 1, 2, 3, 4, 5), "y": _R(27, 1, 2, 5, 3, 4)}),
    "reduce_mean": (
        lambda t: _scalar(ad.reduce_mean(t["x"], (1, 2))),
        {"x": _R(28, 3, 4, 5)}),
    "slice_channels": (
        lambda t: _scalar(ad.slice_channels(t["x"], 1, 3)),
        {"x": _R(29, 2, 4, 3, 3)}),
}


def _small_models(fusion="cvaa"):
    gcfg = GeneratorConfig(levels=2, base_channels=4, growth=2,
                           dense_layers_per_block=1, volume_size=8, fusion=fusion)
    dcfg = DiscriminatorConfig(layers=2, base_channels=4, cond_channels=2,
                               volume_size=8)
    return Generator(gcfg, seed=100), Discriminator(dcfg, seed=101)


def check_generator(max_probes=8, seed=0):
    gen, _ = _small_models()
    rng = np.random.default_rng(seed)
    frontal = rng.random((1, 1, 8, 8))
    lateral = rng.random((1, 1, 8, 8))
    target = Tensor(rng.random((1, 1, 8, 8, 8)))

    def fn(t):
        for name, tensor in t.items():
            gen.bank.tensors[name] = tensor
        out = gen.forward(frontal, lateral)
        return ad.reduce_mean(ad.mul(ad.sub(out, target), ad.sub(out, target)))

    inputs = {n: p.data.copy() for n, p in gen.bank.tensors.items()}
    return grad_check(fn, inputs, eps=MODEL_EPS, max_probes=max_probes, seed=seed)


def check_discriminator(max_probes=8, seed=0):
    _, disc = _small_models()
    rng = np.random.default_rng(seed)
    frontal = rng.random((1, 1, 8, 8))
    lateral = rng.random((1, 1, 8, 8))
    volume = rng.random((1, 1, 8, 8, 8))

    def fn(t):
        for name, tensor in t.items():
            disc.bank.tensors[name] = tensor
        patch = disc.forward(frontal, lateral, volume)
        return ad.reduce_mean(ad.mul(patch, patch))

    inputs = {n: p.data.copy() for n, p in disc.bank.tensors.items()}
    return grad_check(fn, inputs, eps=MODEL_EPS, max_probes=max_probes, seed=seed)


def check_end_to_end(max_probes=4, seed=0):
    """Generator + discriminator + total objective, differentiated w.r.t. the
    generator parameters (the training direction of the combined loss)."""
    gen, disc = _small_models()
    rng = np.random.default_rng(seed)
    frontal = rng.random((1, 1, 8, 8))
    lateral = rng.random((1, 1, 8, 8))
    target = Tensor(rng.random((1, 1, 8, 8, 8)))
    weights = LossWeights(1.0, 1.0, 1.0)
    for p in disc.bank.tensors.values():
        p.requires_grad = False

    def fn(t):
        for name, tensor in t.items():
            gen.bank.tensors[name] = tensor
        pred = gen.forward(frontal, lateral)
        patch = disc.forward(frontal, lateral, pred)
        total, _ = total_generator_loss(patch, pred, target, weights)
        return total

    inputs = {n: p.data.copy() for n, p in gen.bank.tensors.items()}
    return grad_check(fn, inputs, eps=MODEL_EPS, max_probes=max_probes, seed=seed)


def check_discriminator_loss(max_probes=6, seed=0):
    gen, disc = _small_models()
    rng = np.random.default_rng(seed)
    frontal = rng.random((1, 1, 8, 8))
    lateral = rng.random((1, 1, 8, 8))
    target = rng.random((1, 1, 8, 8, 8))
    fake = gen.forward(frontal, lateral).detach()

    def fn(t):
        for name, tensor in t.items():
            disc.bank.tensors[name] = tensor
        pr = disc.forward(frontal, lateral, target)
        pf = disc.forward(frontal, lateral, fake)
        return lsgan_discriminator_loss(pr, pf)

    inputs = {n: p.data.copy() for n, p in disc.bank.tensors.items()}
    return grad_check(fn, inputs, eps=MODEL_EPS, max_probes=max_probes, seed=seed)


MODEL_CHECKS = {
    "generator": check_generator,
    "discriminator": check_discriminator,
    "end_to_end": check_end_to_end,
    "discriminator_loss": check_discriminator_loss,
}


def run_all(op_name=None):
    """Yields (name, GradCheckReport) for the selected (or all) checks."""
    if op_name is not None:
        if op_name in OP_CHECKS:
            fn, inputs = OP_CHECKS[op_name]
            yield op_name, grad_check(fn, {k: v.copy() for k, v in inputs.items()})
        elif op_name in MODEL_CHECKS:
            yield op_name, MODEL_CHECKS[op_name]()
        else:
            raise KeyError("no registered check named %r" % op_name)
        return
    for name, (fn, inputs) in OP_CHECKS.items():
        yield name, grad_check(fn, {k: v.copy() for k, v in inputs.items()})
    for name, fn in MODEL_CHECKS.items():
        yield name, fn()
