"""Walk through the data side of the package: make a phantom CT volume,
project it into a biplanar X-ray pair, and dump mid-slices as PGM images.

Run from the repo root:  python3 demos/phantom_and_drr.py
Outputs land in demos/out/.
"""

import os

import numpy as np

from biplanarct.projection import synthesize_biplanar, write_xray_pair
from biplanarct.training import export_slices
from biplanarct.volumes import PhantomSpec, clip_normalize, generate_phantom, write_volume

out_dir = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(out_dir, exist_ok=True)

# A phantom is a pure function of its spec: same seed, same voxels, always.
spec = PhantomSpec(size=32, seed=7, implant_probability=1.0)
vol = generate_phantom(spec)
print("phantom: dims %s, spacing %s mm" % (vol.dims, vol.spacing))
print("HU range: [%.0f, %.0f]" % (vol.values.min(), vol.values.max()))

# Rough tissue census. Air fills most of the cube, soft tissue the body
# ellipsoid, bone the vertebral column, implants the thin rods.
v = vol.values
for name, lo, hi in [("air", -1000, -999), ("soft", 0, 80),
                     ("bone", 400, 1200), ("implant", 2500, 3500)]:
    n = int(((v >= lo) & (v <= hi)).sum())
    print("  %-8s %6d voxels" % (name, n))

ctv_path = os.path.join(out_dir, "phantom.ctv")
write_volume(vol, ctv_path)

# The DRR model is a parallel-beam mean projection: frontal collapses the
# antero-posterior axis (y), lateral the left-right axis (x). Because it is
# a mean of values in [0, 1], the images stay in [0, 1] too.
nv = clip_normalize(vol)
pair = synthesize_biplanar(nv)
print("frontal image %s, range [%.3f, %.3f]"
      % (pair.frontal.shape, pair.frontal.min(), pair.frontal.max()))
write_xray_pair(pair, os.path.join(out_dir, "phantom.bxr"), vol.dims)

# Mid-slices of the raw HU volume for eyeballing (any PGM viewer works).
for path in export_slices(ctv_path, "mid3", out_dir):
    print("wrote", path)

# Sanity property worth knowing: projection is linear and mass-preserving,
# so the image mean equals the volume mean exactly.
print("volume mean %.6f vs frontal image mean %.6f"
      % (nv.values.mean(), pair.frontal.mean()))
