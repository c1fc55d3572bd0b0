"""Training objectives: least-squares adversarial pair, voxel reconstruction
loss, and the three-plane orthogonal projection loss.

Expectations are realized as means over all patches/voxels and the batch.
The discriminator loss carries the usual 0.5 factor; it rescales steps but
not the minimizer. The generator's fake volumes must be detached before
entering the discriminator loss so no gradient leaks back (see
``lsgan_discriminator_loss``).
"""

from __future__ import annotations

from dataclasses import dataclass

from .autodiff import Tensor, add, mul, reduce_mean, scale, shift, sub


@dataclass
class LossWeights:
    adv: float = 0.1
    vox: float = 10.0
    proj: float = 10.0

    def __post_init__(self):
        if min(self.adv, self.vox, self.proj) < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.adv == self.vox == self.proj == 0:
            raise ValueError("at least one loss weight must be positive")


def _mean_sq(x: Tensor) -> Tensor:
    return reduce_mean(mul(x, x))


def lsgan_generator_loss(patch_fake: Tensor) -> Tensor:
    """mean((D(X, G(X)) - 1)^2): push fake patches toward the 'real' target."""
    return _mean_sq(shift(patch_fake, -1.0))


def lsgan_discriminator_loss(patch_real: Tensor, patch_fake: Tensor) -> Tensor:
    """0.5 * [mean((D(X,Y) - 1)^2) + mean(D(X, G(X))^2)].

    ``patch_fake`` must come from a detached generator output; this function
    cannot verify that, but the training harness enforces it.
    """
    real_term = _mean_sq(shift(patch_real, -1.0))
    fake_term = _mean_sq(patch_fake)
    return scale(add(real_term, fake_term), 0.5)


def voxel_recon_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared voxel error."""
    if pred.shape != target.shape:
        raise ValueError("voxel loss shape mismatch: %s vs %s"
                         % (pred.shape, target.shape))
    return _mean_sq(sub(pred, target))


def projection_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Sum over the axial/coronal/sagittal mean projections of their MSE.

    Inputs are (N, 1, Z, Y, X) tensors; the projection operator is the same
    differentiable axis-mean used for the X-ray synthesis.
    """
    if pred.shape != target.shape:
        raise ValueError("projection loss shape mismatch: %s vs %s"
                         % (pred.shape, target.shape))
    total = None
    for axis in (2, 3, 4):  # z, y, x
        d = sub(reduce_mean(pred, (axis,)), reduce_mean(target, (axis,)))
        term = _mean_sq(d)
        total = term if total is None else add(total, term)
    return total


def total_generator_loss(patch_fake, pred, target, weights: LossWeights):
    """Weighted combination; returns (total, components dict of floats).

    ``patch_fake`` may be None when the adversarial weight is zero.
    """
    l_vox = voxel_recon_loss(pred, target)
    l_proj = projection_loss(pred, target)
    total = add(scale(l_vox, weights.vox), scale(l_proj, weights.proj))
    adv_val = 0.0
    if weights.adv > 0:
        if patch_fake is None:
            raise ValueError("adversarial weight is positive but no patch scores given")
        l_adv = lsgan_generator_loss(patch_fake)
        total = add(total, scale(l_adv, weights.adv))
        adv_val = l_adv.item()
    components = {"adv": adv_val, "vox": l_vox.item(), "proj": l_proj.item()}
    return total, components
