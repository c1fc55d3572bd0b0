"""Projection operator tests: examples, linearity/range/mass properties, I/O."""

import numpy as np
import pytest

from biplanarct.projection import (
    XrayPair,
    project_orthogonal,
    projection_triplet,
    read_xray_pair,
    synthesize_biplanar,
    write_xray_pair,
)
from biplanarct.volumes import NormalizedVolume, PhantomSpec, clip_normalize, generate_phantom


def _norm(values):
    return NormalizedVolume(np.asarray(values, np.float32), (2.0,) * 3)


def test_projection_worked_example():
    # two-slab volume: frontal mean along y averages the slabs
    v = np.zeros((2, 2, 2), np.float32)
    v[:, 0, :] = 1.0
    assert np.allclose(project_orthogonal(_norm(v), "y"), 0.5)
    assert np.allclose(project_orthogonal(_norm(v), "z"),
                       [[1.0, 1.0], [0.0, 0.0]])
    lat = project_orthogonal(_norm(v), "x")
    assert np.allclose(lat, [[1.0, 0.0], [1.0, 0.0]])


def test_projection_constant_volume():
    pair = synthesize_biplanar(_norm(np.full((4, 4, 4), 0.25)))
    assert np.allclose(pair.frontal, 0.25)
    assert np.allclose(pair.lateral, 0.25)


def test_projection_axis_orientation():
    # a single bright voxel lands at the right pixel in every view
    v = np.zeros((4, 5, 6), np.float32)
    v[1, 2, 3] = 1.0
    ax, cor, sag = projection_triplet(v)
    assert ax.shape == (5, 6) and ax[2, 3] > 0 and ax.sum() == ax[2, 3]
    assert cor.shape == (4, 6) and cor[1, 3] > 0 and cor.sum() == cor[1, 3]
    assert sag.shape == (4, 5) and sag[1, 2] > 0 and sag.sum() == sag[1, 2]


def test_projection_invalid_axis():
    with pytest.raises(ValueError):
        project_orthogonal(np.zeros((2, 2, 2)), "w")


@pytest.mark.parametrize("axis", ["z", "y", "x"])
def test_projection_properties_over_corpus(axis):
    """Linearity, range preservation, and mass conservation on 100 volumes."""
    for seed in range(100):
        rng = np.random.default_rng(seed)
        a = rng.uniform(0, 1, (8, 8, 8))
        b = rng.uniform(0, 1, (8, 8, 8))
        alpha = float(rng.uniform(-2, 2))
        pa, pb = project_orthogonal(a, axis), project_orthogonal(b, axis)
        # linearity
        mixed = project_orthogonal(alpha * a + b, axis)
        assert np.abs(mixed - (alpha * pa + pb)).max() < 1e-6
        # range preservation for mean projection
        assert pa.min() >= a.min() - 1e-6 and pa.max() <= a.max() + 1e-6
        # mass conservation: image mean equals volume mean
        assert abs(pa.mean() - a.mean()) < 1e-6


def test_phantom_projections_in_unit_range():
    for seed in range(5):
        nv = clip_normalize(generate_phantom(PhantomSpec(seed=seed)))
        pair = synthesize_biplanar(nv)
        assert pair.frontal.shape == (32, 32)
        assert pair.lateral.shape == (32, 32)
        for img in (pair.frontal, pair.lateral):
            assert img.min() >= 0.0 and img.max() <= 1.0


def test_xray_pair_validation():
    with pytest.raises(ValueError, match="z extent"):
        XrayPair(np.zeros((4, 4)), np.zeros((5, 4)))
    with pytest.raises(ValueError, match="2D"):
        XrayPair(np.zeros((4, 4, 1)), np.zeros((4, 4)))


def test_bxr_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    dims = (6, 4, 5)
    pair = XrayPair(rng.uniform(0, 1, (6, 5)).astype(np.float32),
                    rng.uniform(0, 1, (6, 4)).astype(np.float32))
    path = tmp_path / "p.bxr"
    write_xray_pair(pair, path, dims)
    back = read_xray_pair(path)
    assert np.array_equal(back.frontal, pair.frontal)
    assert np.array_equal(back.lateral, pair.lateral)
    assert path.stat().st_size == 16 + 4 * (6 * 5 + 6 * 4)


def test_bxr_shape_consistency_enforced(tmp_path):
    pair = XrayPair(np.zeros((4, 4)), np.zeros((4, 4)))
    with pytest.raises(ValueError, match="inconsistent"):
        write_xray_pair(pair, tmp_path / "bad.bxr", (4, 4, 5))


def test_bxr_bad_magic_and_truncation(tmp_path):
    path = tmp_path / "junk.bxr"
    path.write_bytes(b"WHAT" + b"\x00" * 32)
    with pytest.raises(IOError, match="bad magic"):
        read_xray_pair(path)
    good = tmp_path / "good.bxr"
    write_xray_pair(XrayPair(np.zeros((2, 2)), np.zeros((2, 2))), good, (2, 2, 2))
    cut = tmp_path / "cut.bxr"
    cut.write_bytes(good.read_bytes()[:-6])
    with pytest.raises(IOError, match="truncated"):
        read_xray_pair(cut)
