"""Alternating GAN training: Adam, checkpointing, the epoch loop, and the
inference/evaluation entry points built on top of it.

Determinism contract: a config fully determines the run. Parameter init
derives from the config seed, epoch shuffling comes from one RNG whose state
is checkpointed, so resuming from any epoch checkpoint continues the exact
trajectory of the unbroken run.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, fields

import numpy as np

from .autodiff import Tensor, backward
from .discriminator import Discriminator, DiscriminatorConfig
from .generator import Generator, GeneratorConfig
from .losses import (
    LossWeights,
    lsgan_discriminator_loss,
    total_generator_loss,
)
from .metrics import MetricReport, compute_all
from .projection import read_xray_pair
from .volumes import CtVolume, clip_normalize, read_volume, write_volume

MAGIC_CKPT = b"CKP1"
CKPT_VERSION = 1


class TrainingDiverged(RuntimeError):
    def __init__(self, step, components):
        super().__init__("non-finite loss at step %d: %s" % (step, components))
        self.step = step
        self.components = components


@dataclass
class TrainConfig:
    volume_size: int = 32
    levels: int = 3
    base_channels: int = 16
    batch_size: int = 4
    epochs: int = 30
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.99
    eps_adam: float = 1e-8
    lambda_adv: float = 0.1
    lambda_vox: float = 10.0
    lambda_proj: float = 10.0
    d_steps_per_g_step: int = 1
    fusion: str = "cvaa"
    keep_checkpoints: str = "latest"  # "latest" | "all"
    spacing: float = 2.0
    seed: int = 0
    data_dir: str = "data"
    out_dir: str = "runs/out"

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(levels=self.levels, base_channels=self.base_channels,
                               volume_size=self.volume_size, fusion=self.fusion)

    def discriminator_config(self) -> DiscriminatorConfig:
        return DiscriminatorConfig(volume_size=self.volume_size)

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda_adv, self.lambda_vox, self.lambda_proj)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            lines.append("%s = %s" % (f.name, getattr(self, f.name)))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TrainConfig":
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError("line %d: expected 'key = value', got %r"
                                 % (lineno, raw))
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in types:
                raise ValueError("line %d: unknown config key %r" % (lineno, key))
            ftype = types[key]
            if ftype in ("int", int):
                kwargs[key] = int(value)
            elif ftype in ("float", float):
                kwargs[key] = float(value)
            else:
                kwargs[key] = value
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        with open(path) as f:
            return cls.from_text(f.read())


# ---------------------------------------------------------------------------
# Adam

class AdamState:
    def __init__(self, params: dict):
        self.m = {n: np.zeros_like(t.data) for n, t in params.items()}
        self.v = {n: np.zeros_like(t.data) for n, t in params.items()}
        self.t = 0


def adam_step(params: dict, state: AdamState, lr: float, beta1: float,
              beta2: float, eps: float):
    """Standard bias-corrected Adam update, in place."""
    for name, p in params.items():
        if p.grad is None:
            raise ValueError("adam_step: parameter %r has no gradient" % name)
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for name, p in params.items():
        g = p.grad.astype(np.float32, copy=False)
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * (g * g)
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


# ---------------------------------------------------------------------------
# dataset

def load_dataset(data_dir):
    """Paired samples: <id>.ctv (HU volume) + <id>.bxr. Returns a sorted list of
    dicts with normalized volume and X-ray arrays ready for batching."""
    samples = []
    for name in sorted(os.listdir(data_dir)):
        if not name.endswith(".ctv"):
            continue
        stem = name[:-4]
        vol_path = os.path.join(data_dir, name)
        pair_path = os.path.join(data_dir, stem + ".bxr")
        if not os.path.exists(pair_path):
            continue
        vol = clip_normalize(read_volume(vol_path))
        pair = read_xray_pair(pair_path)
        samples.append({
            "id": stem,
            "volume": vol.values[None],            # (1, Z, Y, X)
            "frontal": pair.frontal[None],          # (1, Z, X)
            "lateral": pair.lateral[None],
            "spacing": vol.spacing,
        })
    return samples


def _stack(batch, key):
    return np.stack([s[key] for s in batch]).astype(np.float32)


# ---------------------------------------------------------------------------
# steps and loop

def _set_requires_grad(bank, flag: bool):
    for t in bank.tensors.values():
        t.requires_grad = flag


def train_step(batch, gen: Generator, disc: Discriminator, opt_g: AdamState,
               opt_d: AdamState, cfg: TrainConfig, step: int) -> dict:
    """One alternating update (discriminator first, then generator)."""
    frontal = _stack(batch, "frontal")
    lateral = _stack(batch, "lateral")
    target = Tensor(_stack(batch, "volume"))
    weights = cfg.loss_weights()

    use_adv = cfg.lambda_adv > 0

    # discriminator update(s): fake volumes are detached
    d_loss_val = 0.0
    for _ in range(cfg.d_steps_per_g_step if use_adv else 0):
        _set_requires_grad(gen.bank, False)
        fake = gen.forward(frontal, lateral).detach()
        _set_requires_grad(gen.bank, True)
        disc.bank.zero_grads()
        patch_real = disc.forward(frontal, lateral, target)
        patch_fake = disc.forward(frontal, lateral, fake)
        d_loss = lsgan_discriminator_loss(patch_real, patch_fake)
        backward(d_loss)
        adam_step(disc.bank.tensors, opt_d, cfg.lr, cfg.beta1, cfg.beta2,
                  cfg.eps_adam)
        d_loss_val = d_loss.item()

    # generator update: discriminator weights frozen out of the graph
    gen.bank.zero_grads()
    pred = gen.forward(frontal, lateral)
    patch_fake = None
    if use_adv:
        _set_requires_grad(disc.bank, False)
        patch_fake = disc.forward(frontal, lateral, pred)
        _set_requires_grad(disc.bank, True)
    g_loss, components = total_generator_loss(patch_fake, pred, target, weights)
    backward(g_loss)
    adam_step(gen.bank.tensors, opt_g, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps_adam)

    components["d"] = d_loss_val
    components["g_total"] = g_loss.item()
    if not all(np.isfinite(list(components.values()))):
        grad_norms = {n: float(np.linalg.norm(t.grad)) if t.grad is not None else 0.0
                      for n, t in list(gen.bank.tensors.items())[:5]}
        components["sample_grad_norms"] = grad_norms
        raise TrainingDiverged(step, components)
    return components


def train(cfg: TrainConfig, resume: str | None = None, log_fn=None):
    """Full training run; returns (gen, disc, checkpoint_path)."""
    samples = load_dataset(cfg.data_dir)
    if not samples:
        raise ValueError("no paired .ctv/.bxr samples found in %r" % cfg.data_dir)
    os.makedirs(cfg.out_dir, exist_ok=True)

    gen = Generator(cfg.generator_config(), seed=cfg.seed)
    disc = Discriminator(cfg.discriminator_config(), seed=cfg.seed + 1)
    opt_g = AdamState(gen.bank.tensors)
    opt_d = AdamState(disc.bank.tensors)
    shuffle_rng = np.random.default_rng(cfg.seed + 2)
    step = 0

    if resume is not None:
        ckpt = load_checkpoint(resume)
        apply_checkpoint(ckpt, gen, disc, opt_g, opt_d, shuffle_rng)
        step = ckpt["step"]

    steps_per_epoch = -(-len(samples) // cfg.batch_size)
    start_epoch = step // steps_per_epoch
    log_path = os.path.join(cfg.out_dir, "loss_log.csv")
    mode = "a" if resume is not None else "w"
    with open(log_path, mode) as log:
        if mode == "w":
            log.write("step,L_adv,L_vox,L_proj,L_D\n")
        for epoch in range(start_epoch, cfg.epochs):
            order = shuffle_rng.permutation(len(samples))
            for b in range(steps_per_epoch):
                idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
                batch = [samples[i] for i in idx]
                comp = train_step(batch, gen, disc, opt_g, opt_d, cfg, step)
                log.write("%d,%.8f,%.8f,%.8f,%.8f\n"
                          % (step, comp["adv"], comp["vox"], comp["proj"], comp["d"]))
                step += 1
                if log_fn is not None:
                    log_fn(step, comp)
            ckpt_path = os.path.join(cfg.out_dir, "epoch_%04d.ckpt" % (epoch + 1))
            save_checkpoint(ckpt_path, cfg, gen, disc, opt_g, opt_d, shuffle_rng, step)
            if cfg.keep_checkpoints == "latest" and epoch > start_epoch:
                prev = os.path.join(cfg.out_dir, "epoch_%04d.ckpt" % epoch)
                if os.path.exists(prev):
                    os.remove(prev)
    final = os.path.join(cfg.out_dir, "final.ckpt")
    save_checkpoint(final, cfg, gen, disc, opt_g, opt_d, shuffle_rng, step)
    return gen, disc, final


# ---------------------------------------------------------------------------
# checkpoint format

def _write_block(f, name, arrays):
    nb = name.encode("utf-8")
    f.write(struct.pack("<H", len(nb)))
    f.write(nb)
    shape = arrays[0].shape
    f.write(struct.pack("<B", len(shape)))
    f.write(struct.pack("<%dI" % len(shape), *shape))
    for arr in arrays:
        f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def save_checkpoint(path, cfg: TrainConfig, gen, disc, opt_g: AdamState,
                    opt_d: AdamState, rng, step: int):
    entries = []
    for prefix, bank, opt in (("gen.", gen.bank, opt_g), ("disc.", disc.bank, opt_d)):
        for name in sorted(bank.tensors):
            t = bank.tensors[name]
            entries.append((prefix + name, (t.data, opt.m[name], opt.v[name])))
    rng_state = json.dumps(rng.bit_generator.state, sort_keys=True).encode("utf-8")
    cfg_text = cfg.to_text().encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC_CKPT)
        f.write(struct.pack("<I", CKPT_VERSION))
        f.write(struct.pack("<Q", step))
        f.write(struct.pack("<QQ", opt_g.t, opt_d.t))
        f.write(struct.pack("<I", len(entries)))
        for name, arrays in entries:
            _write_block(f, name, arrays)
        f.write(struct.pack("<I", len(rng_state)))
        f.write(rng_state)
        f.write(struct.pack("<I", len(cfg_text)))
        f.write(cfg_text)


def load_checkpoint(path) -> dict:
    with open(path, "rb") as f:
        if f.read(4) != MAGIC_CKPT:
            raise IOError("%s: not a checkpoint file (bad magic)" % path)
        version, = struct.unpack("<I", f.read(4))
        if version != CKPT_VERSION:
            raise IOError("%s: unsupported checkpoint version %d" % (path, version))
        step, = struct.unpack("<Q", f.read(8))
        t_gen, t_disc = struct.unpack("<QQ", f.read(16))
        n, = struct.unpack("<I", f.read(4))
        params = {}
        for _ in range(n):
            name_len, = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode("utf-8")
            ndim, = struct.unpack("<B", f.read(1))
            shape = struct.unpack("<%dI" % ndim, f.read(4 * ndim))
            count = int(np.prod(shape)) if ndim else 1
            arrays = []
            for _ in range(3):
                buf = f.read(4 * count)
                if len(buf) != 4 * count:
                    raise IOError("%s: truncated parameter block %r" % (path, name))
                arrays.append(np.frombuffer(buf, dtype="<f4").reshape(shape).copy())
            params[name] = tuple(arrays)
        rng_len, = struct.unpack("<I", f.read(4))
        rng_state = json.loads(f.read(rng_len).decode("utf-8"))
        cfg_len, = struct.unpack("<I", f.read(4))
        cfg_text = f.read(cfg_len).decode("utf-8")
    return {"step": step, "t_gen": t_gen, "t_disc": t_disc, "params": params,
            "rng_state": rng_state, "config": TrainConfig.from_text(cfg_text)}


def apply_checkpoint(ckpt, gen, disc, opt_g=None, opt_d=None, rng=None):
    gen_arrays = {k[4:]: v[0] for k, v in ckpt["params"].items() if k.startswith("gen.")}
    disc_arrays = {k[5:]: v[0] for k, v in ckpt["params"].items() if k.startswith("disc.")}
    gen.bank.load_state(gen_arrays)
    if disc is not None:
        disc.bank.load_state(disc_arrays)
    for prefix, opt in (("gen.", opt_g), ("disc.", opt_d)):
        if opt is None:
            continue
        for full, (_, m, v) in ckpt["params"].items():
            if full.startswith(prefix):
                name = full[len(prefix):]
                opt.m[name] = m.copy()
                opt.v[name] = v.copy()
        opt.t = ckpt["t_gen"] if prefix == "gen." else ckpt["t_disc"]
    if rng is not None:
        rng.bit_generator.state = ckpt["rng_state"]


def load_generator(ckpt_path):
    """Rebuild the generator (weights loaded) from a checkpoint."""
    ckpt = load_checkpoint(ckpt_path)
    cfg = ckpt["config"]
    gen = Generator(cfg.generator_config(), seed=cfg.seed)
    apply_checkpoint(ckpt, gen, None)
    return gen, cfg


# ---------------------------------------------------------------------------
# inference, evaluation, slice export

def reconstruct(ckpt_path, pair_path, out_path=None):
    """Forward one X-ray pair through a trained generator; optionally write .ctv.

    The written volume holds normalized [0,1] values with the config spacing.
    """
    gen, cfg = load_generator(ckpt_path)
    pair = read_xray_pair(pair_path)
    V = cfg.volume_size
    if pair.frontal.shape != (V, V) or pair.lateral.shape != (V, V):
        raise ValueError("X-ray extent %s does not match checkpoint volume size %d"
                         % (pair.frontal.shape, V))
    out = gen.forward(pair.frontal[None, None], pair.lateral[None, None])
    vol = CtVolume(out.data[0, 0], (cfg.spacing,) * 3)
    if out_path is not None:
        write_volume(vol, out_path)
    return vol


def evaluate(ckpt_path, data_dir, report_path=None) -> MetricReport:
    """Reconstruct every paired sample and compute all metrics; optional CSV."""
    import warnings

    gen, cfg = load_generator(ckpt_path)
    report = MetricReport()
    for name in sorted(os.listdir(data_dir)):
        if not name.endswith(".ctv"):
            continue
        stem = name[:-4]
        pair_path = os.path.join(data_dir, stem + ".bxr")
        if not os.path.exists(pair_path):
            warnings.warn("sample %s has no .bxr pair, skipped" % stem)
            report.skipped.append(stem)
            continue
        target = clip_normalize(read_volume(os.path.join(data_dir, name)))
        pair = read_xray_pair(pair_path)
        pred = gen.forward(pair.frontal[None, None], pair.lateral[None, None])
        report.add(stem, compute_all(pred.data[0, 0], target.values))
    if report_path is not None:
        report.write_csv(report_path)
    return report


PLANE_AXIS = {"axial": 0, "coronal": 1, "sagittal": 2}


def _write_pgm(path, image):
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    data = np.round(img * 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (data.shape[1], data.shape[0]))
        f.write(data.tobytes())


def export_slices(volume_path, plane, out_dir):
    """Write mid-slice 8-bit PGM image(s); plane in {axial, coronal, sagittal, mid3}."""
    vol = read_volume(volume_path)
    os.makedirs(out_dir, exist_ok=True)
    planes = list(PLANE_AXIS) if plane == "mid3" else [plane]
    stem = os.path.splitext(os.path.basename(volume_path))[0]
    written = []
    for p in planes:
        if p not in PLANE_AXIS:
            raise ValueError("unknown plane %r (expected axial/coronal/sagittal/mid3)"
                             % (p,))
        axis = PLANE_AXIS[p]
        mid = vol.dims[axis] // 2
        image = np.take(vol.values, mid, axis=axis)
        path = os.path.join(out_dir, "%s_%s_%d.pgm" % (stem, p, mid))
        _write_pgm(path, image)
        written.append(path)
    return written
