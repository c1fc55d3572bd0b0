"""Parallel-beam projection of volumes into synthetic biplanar X-rays.

Geometry convention for a (z, y, x) volume:
  z is cranio-caudal, y antero-posterior, x left-right;
  the frontal view projects along y and yields a (z, x) image;
  the lateral view projects along x and yields a (z, y) image.

Projections are mean intensity along the ray axis, so images stay in the
normalized [0, 1] range and the operator is linear. The same three-plane
operator (axial z, coronal y, sagittal x) feeds the projection loss.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .volumes import NormalizedVolume

MAGIC_XRAY = b"BXR1"

AXIS_INDEX = {"z": 0, "y": 1, "x": 2}


@dataclass
class XrayPair:
    """Frontal (z, x) and lateral (z, y) projection images, values in [0, 1]."""
    frontal: np.ndarray
    lateral: np.ndarray

    def __post_init__(self):
        self.frontal = np.asarray(self.frontal, dtype=np.float32)
        self.lateral = np.asarray(self.lateral, dtype=np.float32)
        if self.frontal.ndim != 2 or self.lateral.ndim != 2:
            raise ValueError("X-ray images must be 2D")
        if self.frontal.shape[0] != self.lateral.shape[0]:
            raise ValueError("frontal and lateral must share the z extent: %s vs %s"
                             % (self.frontal.shape, self.lateral.shape))


def project_orthogonal(vol, axis: str) -> np.ndarray:
    """Mean projection of a (z, y, x) array along 'z', 'y' or 'x'.

    Output axis order follows the view convention: z -> (y, x) axial,
    y -> (z, x) coronal/frontal, x -> (z, y) sagittal/lateral.
    """
    values = vol.values if isinstance(vol, NormalizedVolume) else np.asarray(vol)
    if axis not in AXIS_INDEX:
        raise ValueError("axis must be one of 'z', 'y', 'x', got %r" % (axis,))
    return values.mean(axis=AXIS_INDEX[axis])


def synthesize_biplanar(vol: NormalizedVolume) -> XrayPair:
    """Deterministic biplanar pair: frontal along y, lateral along x."""
    return XrayPair(frontal=project_orthogonal(vol, "y"),
                    lateral=project_orthogonal(vol, "x"))


def projection_triplet(vol):
    """(axial, coronal, sagittal) mean projections along z, y, x."""
    return (project_orthogonal(vol, "z"),
            project_orthogonal(vol, "y"),
            project_orthogonal(vol, "x"))


# ---------------------------------------------------------------------------
# file I/O (.bxr)

def write_xray_pair(pair: XrayPair, path, volume_dims):
    """Write the .bxr format: magic, u32 source dims, frontal then lateral plane."""
    dz, dy, dx = volume_dims
    if pair.frontal.shape != (dz, dx) or pair.lateral.shape != (dz, dy):
        raise ValueError("pair shapes %s/%s inconsistent with volume dims %s"
                         % (pair.frontal.shape, pair.lateral.shape, volume_dims))
    with open(path, "wb") as f:
        f.write(MAGIC_XRAY)
        f.write(struct.pack("<3I", dz, dy, dx))
        f.write(np.ascontiguousarray(pair.frontal, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(pair.lateral, dtype="<f4").tobytes())


def read_xray_pair(path) -> XrayPair:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC_XRAY:
            raise IOError("%s: bad magic %r" % (path, magic))
        header = f.read(12)
        if len(header) != 12:
            raise IOError("%s: truncated header" % path)
        dz, dy, dx = struct.unpack("<3I", header)
        front = f.read(4 * dz * dx)
        lat = f.read(4 * dz * dy)
        if len(front) != 4 * dz * dx or len(lat) != 4 * dz * dy:
            raise IOError("%s: truncated payload" % path)
    return XrayPair(
        frontal=np.frombuffer(front, dtype="<f4").reshape(dz, dx).copy(),
        lateral=np.frombuffer(lat, dtype="<f4").reshape(dz, dy).copy())
