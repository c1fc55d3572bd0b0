"""CT volume handling: representation, preprocessing, phantom data, file I/O.

Volumes are z-major (z, y, x) float32 scalar fields in Hounsfield-like units
(air -1000, dense implants in the thousands) with per-axis voxel spacing in
millimetres. The preprocessing chain mirrors common clinical practice:
isotropic resampling, centered crop/pad, intensity clipping, and fixed-span
normalization into [0, 1].

Since no clinical dataset ships with the package, ``generate_phantom``
produces seeded lumbar-spine-like phantoms: a soft-tissue body ellipsoid,
stacked vertebral bodies at bone intensity, and optional metal-like rods.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

HU_AIR = -1000.0
HU_CLIP_LO = -1000.0
HU_CLIP_HI = 4096.0

MAGIC_VOLUME = b"CTV1"


class VolumeIOError(IOError):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code  # "bad_magic" | "truncated" | "dims_mismatch"


@dataclass
class CtVolume:
    """3D scalar field in HU-like units, z-major, with mm voxel spacing."""
    values: np.ndarray          # (dz, dy, dx) float32
    spacing: tuple              # (sz, sy, sx) mm

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 3:
            raise ValueError("CtVolume values must be 3D, got shape %s"
                             % (self.values.shape,))
        self.spacing = tuple(float(s) for s in self.spacing)
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise ValueError("spacing must be three positive floats, got %s"
                             % (self.spacing,))

    @property
    def dims(self):
        return self.values.shape


@dataclass
class NormalizedVolume:
    """Volume after clip + fixed-span normalization; every voxel in [0, 1]."""
    values: np.ndarray
    spacing: tuple

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        vmin, vmax = float(self.values.min()), float(self.values.max())
        if vmin < -1e-6 or vmax > 1 + 1e-6:
            raise ValueError("normalized volume out of [0,1]: [%g, %g]" % (vmin, vmax))


# ---------------------------------------------------------------------------
# preprocessing

def resample_isotropic(vol: CtVolume, target: float) -> CtVolume:
    """Trilinear resample to isotropic ``target`` mm spacing.

    New extent per axis is round(old_extent * old_spacing / target), min 1.
    Sample positions are voxel-center aligned and clamped at the borders.
    """
    if target <= 0:
        raise ValueError("target spacing must be positive, got %s" % target)
    old = np.array(vol.dims)
    ratio = np.array(vol.spacing) / target
    new = np.maximum(np.round(old * ratio).astype(int), 1)
    if np.array_equal(new, old) and all(abs(s - target) < 1e-12 for s in vol.spacing):
        return CtVolume(vol.values.copy(), (target,) * 3)
    if any(d == 1 and n != 1 for d, n in zip(old, new)):
        warnings.warn("degenerate axis of extent 1 resampled by nearest neighbor")

    # output voxel i center maps to input index (i + 0.5) / ratio - 0.5
    grids = [(np.arange(n) + 0.5) / r - 0.5 for n, r in zip(new, ratio)]
    coords = np.meshgrid(*grids, indexing="ij")
    out = map_coordinates(vol.values.astype(np.float64), coords, order=1,
                          mode="nearest")
    return CtVolume(out.astype(np.float32), (target,) * 3)


def center_crop_pad(vol: CtVolume, size: int) -> CtVolume:
    """Crop/pad to a centered size^3 block; padding fills with air (-1000 HU).

    Odd leftovers put the extra voxel (crop) / extra pad on the high-index side.
    """
    if size < 1:
        raise ValueError("crop size must be >= 1, got %s" % size)
    out = np.full((size, size, size), HU_AIR, dtype=np.float32)
    src, dst = [], []
    for d in vol.dims:
        if d >= size:
            lo = (d - size) // 2
            src.append(slice(lo, lo + size))
            dst.append(slice(0, size))
        else:
            lo = (size - d) // 2
            src.append(slice(0, d))
            dst.append(slice(lo, lo + d))
    out[tuple(dst)] = vol.values[tuple(src)]
    return CtVolume(out, vol.spacing)


def clip_hu(vol: CtVolume, lo: float = HU_CLIP_LO, hi: float = HU_CLIP_HI) -> CtVolume:
    if lo >= hi:
        raise ValueError("clip bounds must satisfy lo < hi")
    return CtVolume(np.clip(vol.values, lo, hi), vol.spacing)


def clip_normalize(vol: CtVolume, lo: float = HU_CLIP_LO,
                   hi: float = HU_CLIP_HI) -> NormalizedVolume:
    """Clamp to [lo, hi] then map linearly onto [0, 1] (fixed span, not per-volume)."""
    if lo >= hi:
        raise ValueError("clip bounds must satisfy lo < hi")
    v = (np.clip(vol.values, lo, hi) - lo) / (hi - lo)
    return NormalizedVolume(v.astype(np.float32), vol.spacing)


def denormalize(nv: NormalizedVolume, lo: float = HU_CLIP_LO,
                hi: float = HU_CLIP_HI) -> CtVolume:
    return CtVolume(nv.values * (hi - lo) + lo, nv.spacing)


def preprocess(vol: CtVolume, target_spacing: float = 2.0, size: int = 32) -> CtVolume:
    """Resample isotropically, center crop/pad, clip. Idempotent once applied."""
    out = resample_isotropic(vol, target_spacing)
    out = center_crop_pad(out, size)
    return clip_hu(out)


# ---------------------------------------------------------------------------
# procedural phantom

@dataclass
class PhantomSpec:
    size: int = 32
    body_hu: tuple = (0.0, 80.0)
    bone_hu: tuple = (400.0, 1200.0)
    implant_hu: tuple = (2500.0, 3500.0)
    n_vertebrae: int = 4
    implant_probability: float = 0.5
    spacing: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.size < 16:
            raise ValueError("phantom size must be >= 16, got %s" % self.size)
        for name in ("body_hu", "bone_hu", "implant_hu"):
            lo, hi = getattr(self, name)
            if not (HU_CLIP_LO <= lo <= hi <= HU_CLIP_HI):
                raise ValueError("%s range %s outside the clip span [%s, %s]"
                                 % (name, (lo, hi), HU_CLIP_LO, HU_CLIP_HI))


def _ellipsoid_mask(shape, center, semi):
    zz, yy, xx = np.meshgrid(*[np.arange(s) for s in shape], indexing="ij")
    return (((zz - center[0]) / semi[0]) ** 2
            + ((yy - center[1]) / semi[1]) ** 2
            + ((xx - center[2]) / semi[2]) ** 2) <= 1.0


def generate_phantom(spec: PhantomSpec) -> CtVolume:
    """Seeded lumbar-like phantom: body ellipsoid, stacked vertebrae, optional rods.

    Purely a function of the spec: identical specs give bitwise-identical volumes.
    """
    rng = np.random.default_rng(spec.seed)
    S = spec.size
    vol = np.full((S, S, S), HU_AIR, dtype=np.float32)
    zz, yy, xx = np.meshgrid(*[np.arange(S)] * 3, indexing="ij")

    # soft-tissue body: large ellipsoid, slightly jittered
    cy = S / 2 + rng.uniform(-S * 0.03, S * 0.03)
    cx = S / 2 + rng.uniform(-S * 0.03, S * 0.03)
    body = _ellipsoid_mask((S, S, S), (S / 2, cy, cx),
                           (S * 0.49, S * rng.uniform(0.33, 0.38), S * rng.uniform(0.40, 0.45)))
    vol[body] = rng.uniform(*spec.body_hu)

    # vertebral column: body cylinders along z plus a posterior process box
    col_y = cy + S * 0.10
    col_x = cx + rng.uniform(-S * 0.02, S * 0.02)
    n = spec.n_vertebrae
    seg = S / n
    for i in range(n):
        z0 = int(round(i * seg + seg * 0.12))
        z1 = int(round((i + 1) * seg - seg * 0.12))
        if z1 <= z0:
            continue
        hu = rng.uniform(*spec.bone_hu)
        r = S * rng.uniform(0.10, 0.13)
        cyl = (((yy - col_y) ** 2 + (xx - col_x) ** 2) <= r * r) \
            & (zz >= z0) & (zz <= z1)
        vol[cyl & body] = hu
        # spinous-process analogue: thin box behind the cylinder
        py0 = int(round(col_y + r))
        py1 = min(S, int(round(col_y + r + S * 0.12)))
        px0 = int(round(col_x - S * 0.03))
        px1 = int(round(col_x + S * 0.03))
        box = np.zeros_like(cyl)
        box[z0:z1 + 1, py0:py1, max(px0, 0):px1] = True
        vol[box & body] = hu

    # pedicle-screw analogue: thin high-intensity rods through some vertebrae
    for i in range(n):
        if rng.random() >= spec.implant_probability:
            continue
        hu = rng.uniform(*spec.implant_hu)
        zc = (i + 0.5) * seg
        rod_r = max(S * 0.02, 1.0)
        # rod along y, entering from the back through the vertebral body
        off = rng.uniform(-S * 0.05, S * 0.05)
        rod = (((zz - zc) ** 2 + (xx - (col_x + off)) ** 2) <= rod_r ** 2) \
            & (yy >= col_y - S * 0.15) & (yy <= col_y + S * 0.22)
        vol[rod & body] = hu

    return CtVolume(vol, (spec.spacing,) * 3)


# ---------------------------------------------------------------------------
# file I/O (.ctv)

def write_volume(vol: CtVolume, path):
    """Write the .ctv format: magic, u32 dims (z,y,x), f32 spacing, f32 voxels."""
    dz, dy, dx = vol.dims
    with open(path, "wb") as f:
        f.write(MAGIC_VOLUME)
        f.write(struct.pack("<3I", dz, dy, dx))
        f.write(struct.pack("<3f", *vol.spacing))
        f.write(np.ascontiguousarray(vol.values, dtype="<f4").tobytes())


def read_volume(path) -> CtVolume:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC_VOLUME:
            raise VolumeIOError("bad_magic", "%s: bad magic %r" % (path, magic))
        header = f.read(24)
        if len(header) != 24:
            raise VolumeIOError("truncated", "%s: truncated header" % path)
        dz, dy, dx = struct.unpack("<3I", header[:12])
        spacing = struct.unpack("<3f", header[12:])
        payload = f.read(4 * dz * dy * dx)
        if len(payload) != 4 * dz * dy * dx:
            raise VolumeIOError(
                "truncated",
                "%s: payload has %d bytes, header promises %d voxels"
                % (path, len(payload), dz * dy * dx))
        if f.read(1):
            raise VolumeIOError("dims_mismatch",
                                "%s: trailing bytes beyond declared dims" % path)
    values = np.frombuffer(payload, dtype="<f4").reshape(dz, dy, dx)
    return CtVolume(values.copy(), spacing)
