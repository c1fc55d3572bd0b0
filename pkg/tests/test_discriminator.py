"""Patch discriminator tests: shapes, conditioning, locality, equivariance."""

import numpy as np
import pytest

from biplanarct.discriminator import Discriminator, DiscriminatorConfig, condition_lift
from biplanarct.nn import ParamBank


def _inputs(seed, n, V):
    rng = np.random.default_rng(seed)
    return (rng.uniform(0, 1, (n, 1, V, V)).astype(np.float32),
            rng.uniform(0, 1, (n, 1, V, V)).astype(np.float32),
            rng.uniform(0, 1, (n, 1, V, V, V)).astype(np.float32))


def test_patch_map_shape_default():
    cfg = DiscriminatorConfig()  # V=32, 3 layers -> 4^3 patch grid
    assert cfg.patch_extent == 4
    disc = Discriminator(cfg, seed=0)
    out = disc.forward(*_inputs(0, 2, 32))
    assert out.shape == (2, 1, 4, 4, 4)


def test_condition_lift_channel_count():
    cfg = DiscriminatorConfig(volume_size=8, layers=2, cond_channels=8)
    bank = ParamBank(np.random.default_rng(0))
    f, l, _ = _inputs(1, 1, 8)
    from biplanarct.autodiff import Tensor
    cond = condition_lift(Tensor(f), Tensor(l), bank, cfg)
    assert cond.shape == (1, 16, 8, 8, 8)  # 8 per view, concatenated


def test_condition_size_mismatch_rejected():
    disc = Discriminator(DiscriminatorConfig(volume_size=8, layers=2,
                                             base_channels=4), seed=0)
    f, l, v = _inputs(2, 1, 8)
    with pytest.raises(ValueError, match="does not match"):
        disc.forward(f[:, :, :4, :4], l, v)
    with pytest.raises(ValueError):
        disc.forward(f, l, np.zeros((1, 1, 4, 4, 4), np.float32))


def test_scores_unbounded_no_terminal_activation():
    disc = Discriminator(DiscriminatorConfig(volume_size=8, layers=2,
                                             base_channels=8), seed=3)
    scores = []
    for seed in range(8):
        out = disc.forward(*_inputs(seed, 1, 8))
        scores.append(out.data)
    scores = np.concatenate([s.ravel() for s in scores])
    # a sigmoid head would trap everything in (0, 1); LSGAN scores roam free
    assert scores.min() < 0 or scores.max() > 1 or np.ptp(scores) > 0


def test_patch_score_locality():
    """Patch (0,0,0) at V=32, layers=2 must only see input indices <= 13.

    Receptive field: out conv k3 p1 covers +-1 at stride-4 resolution; two
    k4 s2 p1 blocks expand that to input range [-something, 13]. Perturbing
    a far voxel must not change the first patch score.
    """
    cfg = DiscriminatorConfig(volume_size=32, layers=2, base_channels=4,
                              cond_channels=2)
    disc = Discriminator(cfg, seed=1)
    f, l, v = _inputs(4, 1, 32)
    base = disc.forward(f, l, v).data
    v2 = v.copy()
    v2[0, 0, 20:, 20:, 20:] += 5.0  # far corner, outside the receptive field
    moved = disc.forward(f, l, v2).data
    assert moved[0, 0, 0, 0, 0] == pytest.approx(base[0, 0, 0, 0, 0], abs=1e-6)
    assert abs(moved[0, 0, -1, -1, -1] - base[0, 0, -1, -1, -1]) > 1e-6
    # a voxel inside the field does move the first patch
    v3 = v.copy()
    v3[0, 0, 2, 2, 2] += 5.0
    assert abs(disc.forward(f, l, v3).data[0, 0, 0, 0, 0]
               - base[0, 0, 0, 0, 0]) > 1e-6


def test_batch_permutation_equivariance():
    disc = Discriminator(DiscriminatorConfig(volume_size=8, layers=2,
                                             base_channels=4), seed=2)
    f, l, v = _inputs(5, 3, 8)
    out = disc.forward(f, l, v).data
    perm = [2, 0, 1]
    out_p = disc.forward(f[perm], l[perm], v[perm]).data
    assert np.allclose(out_p, out[perm], atol=1e-5)


def test_discriminator_deterministic():
    a = Discriminator(DiscriminatorConfig(volume_size=8, layers=2,
                                          base_channels=4), seed=9)
    b = Discriminator(DiscriminatorConfig(volume_size=8, layers=2,
                                          base_channels=4), seed=9)
    args = _inputs(6, 1, 8)
    assert np.array_equal(a.forward(*args).data, b.forward(*args).data)


def test_param_count_golden():
    assert Discriminator(DiscriminatorConfig()).n_params() == 694305


def test_config_validation():
    with pytest.raises(ValueError, match="layers"):
        DiscriminatorConfig(layers=0)
    with pytest.raises(ValueError, match="patch map"):
        DiscriminatorConfig(volume_size=8, layers=4)


def test_discriminator_gradcheck():
    from biplanarct.verification import check_discriminator

    report = check_discriminator()
    assert report.passed, report
    assert report.max_error < 1e-4
