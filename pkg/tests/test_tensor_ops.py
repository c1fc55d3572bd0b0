"""Tensor engine tests: forward oracles, adjointness, and gradient checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import biplanarct.autodiff as ad
from biplanarct.autodiff import Tensor, backward, grad_check
from biplanarct.autodiff.ops import ShapeError
from biplanarct.autodiff.tensor import Node


# ---------------------------------------------------------------------------
# independent direct-summation convolution oracles

def brute_conv(x, w, stride, pad):
    """Direct-summation cross-correlation in float64, any spatial rank."""
    nsp = x.ndim - 2
    pads = [(0, 0), (0, 0)] + [(pad, pad)] * nsp
    xp = np.pad(x.astype(np.float64), pads)
    k = w.shape[2:]
    out_sp = tuple((xp.shape[2 + i] - k[i]) // stride + 1 for i in range(nsp))
    y = np.zeros((x.shape[0], w.shape[0]) + out_sp)
    for n in range(x.shape[0]):
        for o in range(w.shape[0]):
            for pos in np.ndindex(*out_sp):
                window = xp[(n, slice(None)) + tuple(
                    slice(p * stride, p * stride + kk) for p, kk in zip(pos, k))]
                y[(n, o) + pos] = (window * w[o]).sum()
    return y


def test_conv3d_zero_input_is_zero():
    out = ad.conv3d(Tensor(np.zeros((1, 1, 3, 3, 3))),
                    Tensor(np.random.default_rng(0).normal(size=(2, 1, 3, 3, 3))),
                    Tensor(np.zeros(2)), 1, 1)
    assert out.shape == (1, 2, 3, 3, 3)
    assert np.all(out.data == 0)


def test_conv3d_delta_echoes_kernel():
    x = np.zeros((1, 1, 3, 3, 3), dtype=np.float32)
    x[0, 0, 1, 1, 1] = 1.0
    w = np.arange(27, dtype=np.float32).reshape(1, 1, 3, 3, 3)
    out = ad.conv3d(Tensor(x), Tensor(w), Tensor(np.zeros(1)), 1, 1)
    # cross-correlation of a centered delta reflects the kernel through center
    assert np.allclose(out.data[0, 0], w[0, 0, ::-1, ::-1, ::-1])


@pytest.mark.parametrize("stride,pad", [(1, 1), (2, 1), (1, 0)])
def test_conv3d_matches_brute_force(rng, stride, pad):
    x = rng.standard_normal((1, 2, 4, 4, 4)).astype(np.float32)
    w = rng.standard_normal((3, 2, 3, 3, 3)).astype(np.float32)
    got = ad.conv3d(Tensor(x), Tensor(w), Tensor(np.zeros(3)), stride, pad).data
    ref = brute_conv(x, w, stride, pad)
    assert np.abs(got - ref).max() / max(np.abs(ref).max(), 1e-9) < 1e-5


def test_conv2d_matches_brute_force(rng):
    x = rng.standard_normal((2, 3, 6, 6)).astype(np.float32)
    w = rng.standard_normal((4, 3, 3, 3)).astype(np.float32)
    got = ad.conv2d(Tensor(x), Tensor(w), Tensor(np.zeros(4)), 1, 1).data
    ref = brute_conv(x, w, 1, 1)
    assert np.abs(got - ref).max() / np.abs(ref).max() < 1e-5


def test_conv2d_stride2_shape():
    out = ad.conv2d(Tensor(np.zeros((1, 1, 8, 8))),
                    Tensor(np.zeros((1, 1, 3, 3))), Tensor(np.zeros(1)), 2, 1)
    assert out.shape == (1, 1, 4, 4)


def test_conv_channel_mismatch_rejected():
    with pytest.raises(ShapeError, match="channels"):
        ad.conv3d(Tensor(np.zeros((1, 2, 4, 4, 4))),
                  Tensor(np.zeros((1, 3, 3, 3, 3))), Tensor(np.zeros(1)), 1, 1)


def test_conv_transpose3d_shape_and_zero():
    out = ad.conv_transpose3d(Tensor(np.zeros((1, 1, 2, 2, 2))),
                              Tensor(np.zeros((1, 1, 4, 4, 4))),
                              Tensor(np.full(1, 0.7)), 2, 1)
    assert out.shape == (1, 1, 4, 4, 4)
    assert np.allclose(out.data, 0.7)  # zero input leaves only the bias


@pytest.mark.parametrize("stride,pad,k", [(1, 1, 3), (2, 1, 4)])
def test_conv_transpose_adjoint_identity(rng, stride, pad, k):
    # <conv3d(x, w), y> == <x, conv_transpose3d(y, w)>
    x = rng.standard_normal((1, 2, 6, 6, 6))
    w = rng.standard_normal((3, 2, k, k, k))
    y_shape = ad.conv3d(Tensor(x), Tensor(w), Tensor(np.zeros(3)), stride, pad).shape
    y = rng.standard_normal(y_shape)
    cx = ad.conv3d(Tensor(x), Tensor(w), Tensor(np.zeros(3)), stride, pad).data
    ty = ad.conv_transpose3d(Tensor(y), Tensor(w), Tensor(np.zeros(2)),
                             stride, pad).data
    lhs = float((cx * y).sum())
    rhs = float((x * ty).sum())
    assert abs(lhs - rhs) / max(abs(lhs), 1e-9) < 1e-5


# ---------------------------------------------------------------------------
# pointwise and structural ops

def test_pointwise_values():
    x = Tensor(np.array([-1.5, 0.0, 2.0]))
    assert np.allclose(ad.relu(x).data, [0.0, 0.0, 2.0])
    assert np.allclose(ad.leaky_relu(Tensor(np.array([-2.0])), 0.2).data, [-0.4])
    assert np.allclose(ad.sigmoid(Tensor(np.array([0.0]))).data, [0.5])


def test_softmax_symmetry_and_stability():
    two = ad.softmax_channel(Tensor(np.zeros((1, 2, 1))))
    assert np.allclose(two.data, 0.5)
    big = ad.softmax_channel(Tensor(np.array([[[1000.0], [0.0]]])))
    assert np.all(np.isfinite(big.data))
    assert big.data[0, 0, 0] > 0.999999


def test_softmax_sums_to_one(rng):
    x = rng.standard_normal((2, 2, 4, 4, 4))
    y = ad.softmax_channel(Tensor(x)).data
    assert np.abs(y.sum(axis=1) - 1.0).max() < 1e-6
    assert y.min() > 0


def test_concat_channels():
    a = Tensor(np.ones((1, 2, 3, 3)), requires_grad=True)
    b = Tensor(np.ones((1, 3, 3, 3)), requires_grad=True)
    c = ad.concat_channels([a, b])
    assert c.shape == (1, 5, 3, 3)
    single = ad.concat_channels([a])
    assert np.array_equal(single.data, a.data)
    backward(ad.reduce_sum(c))
    assert np.all(a.grad == 1) and np.all(b.grad == 1)
    with pytest.raises(ShapeError):
        ad.concat_channels([a, Tensor(np.ones((1, 2, 4, 4)))])


def test_gate_identities(rng):
    x = Tensor(rng.standard_normal((1, 3, 4, 4)))
    ones = Tensor(np.ones((1, 1, 4, 4)))
    zeros = Tensor(np.zeros((1, 1, 4, 4)))
    assert np.array_equal(ad.mul(x, ones).data, x.data)
    assert np.all(ad.mul(x, zeros).data == 0)
    with pytest.raises(ShapeError):
        ad.mul(x, Tensor(np.ones((1, 2, 4, 4, 4))))


def test_gate_gradient_matches_finite_differences(rng):
    report = grad_check(
        lambda t: ad.reduce_mean(ad.mul(ad.mul(t["x"], t["g"]), t["up"])),
        {"x": rng.standard_normal((1, 3, 3, 3)),
         "g": rng.standard_normal((1, 1, 3, 3)),
         "up": rng.standard_normal((1, 3, 3, 3))},
        tol=1e-4)
    assert report.passed, report


def test_instance_norm_moments(rng):
    x = rng.standard_normal((2, 3, 4, 4, 4)) * 5 + 2
    y = ad.instance_norm(Tensor(x), Tensor(np.ones(3)), Tensor(np.zeros(3))).data
    assert np.abs(y.mean(axis=(2, 3, 4))).max() < 1e-5
    assert np.abs(y.var(axis=(2, 3, 4)) - 1.0).max() < 1e-3


def test_instance_norm_edge_cases():
    const = ad.instance_norm(Tensor(np.full((1, 1, 2, 2), 3.0)),
                             Tensor(np.ones(1)), Tensor(np.zeros(1))).data
    assert np.abs(const).max() < 1e-3  # zero variance guarded by epsilon
    shifted = ad.instance_norm(Tensor(np.random.default_rng(0).normal(size=(1, 1, 2, 2))),
                               Tensor(np.zeros(1)), Tensor(np.full(1, 5.0))).data
    assert np.allclose(shifted, 5.0)
    vals = ad.instance_norm(Tensor(np.array([1.0, 2, 3, 4]).reshape(1, 1, 4)),
                            Tensor(np.ones(1)), Tensor(np.zeros(1))).data
    assert abs(vals.mean()) < 1e-5 and abs(vals.var() - 1) < 1e-4


def test_expand_repeat_tiling(rng):
    m = rng.standard_normal((1, 2, 4, 4))
    out = ad.expand_repeat(Tensor(m), 1, 4)
    assert out.shape == (1, 2, 4, 4, 4)
    for i in range(4):
        assert np.array_equal(out.data[:, :, :, i, :], m)
    x = Tensor(m, requires_grad=True)
    backward(ad.reduce_sum(ad.expand_repeat(x, 0, 3)))
    assert np.all(x.grad == 3)
    with pytest.raises(ShapeError):
        ad.expand_repeat(Tensor(m), 5, 2)


def test_permute_axes_roundtrip(rng):
    x = rng.standard_normal((1, 2, 3, 4, 5))
    order = (0, 1, 4, 2, 3)
    inverse = tuple(np.argsort(order))
    there = ad.permute_axes(Tensor(x), order)
    back = ad.permute_axes(there, inverse)
    assert np.array_equal(back.data, x)
    # element bookkeeping for spatial order (2, 0, 1)
    assert there.data[0, 1, 4, 2, 3] == x[0, 1, 2, 3, 4]
    with pytest.raises(ShapeError):
        ad.permute_axes(Tensor(x), (0, 1, 2, 2, 3))


def test_reduce_mean():
    x = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
    m = ad.reduce_mean(x)
    assert m.item() == pytest.approx(2.0)
    backward(m)
    assert np.allclose(x.grad, 1 / 3)
    ident = ad.reduce_mean(Tensor(np.arange(4.0)), axes=())
    assert np.array_equal(ident.data, np.arange(4.0))


# ---------------------------------------------------------------------------
# backward semantics

def test_backward_sum_gives_ones(rng):
    x = Tensor(rng.standard_normal((3, 3)), requires_grad=True)
    backward(ad.reduce_sum(x))
    assert np.all(x.grad == 1)


def test_backward_mse_matches_finite_differences(rng):
    report = grad_check(
        lambda t: ad.reduce_mean(ad.mul(ad.sub(t["x"], t["y"]),
                                        ad.sub(t["x"], t["y"]))),
        {"x": rng.standard_normal((2, 3)), "y": rng.standard_normal((2, 3))},
        tol=1e-4)
    assert report.passed, report


def test_backward_disconnected_and_accumulation(rng):
    x = Tensor(rng.standard_normal(4), requires_grad=True)
    unused = Tensor(rng.standard_normal(4), requires_grad=True)
    loss = ad.reduce_sum(ad.mul(x, x))
    backward(loss)
    assert unused.grad is None
    first = x.grad.copy()
    backward(loss)  # accumulates without reset
    assert np.allclose(x.grad, 2 * first)


def test_backward_rejects_non_scalar(rng):
    x = Tensor(rng.standard_normal((2, 2)), requires_grad=True)
    with pytest.raises(ValueError, match="scalar"):
        backward(ad.mul(x, x))


def test_gradcheck_negative_control(rng):
    """A corrupted vjp must be caught by the checker."""
    from biplanarct.autodiff.tensor import make_op

    def bad_square(t):
        x = t["x"]
        out = make_op("bad_square", x.data ** 2, (x,),
                      lambda g: (g * 3.0 * x.data,))  # wrong factor
        return ad.reduce_mean(out)

    report = grad_check(bad_square, {"x": rng.standard_normal(5) + 2.0}, tol=1e-4)
    assert not report.passed


def test_gradcheck_linear_is_exact(rng):
    report = grad_check(lambda t: ad.reduce_sum(ad.scale(t["x"], 2.5)),
                        {"x": rng.standard_normal(6)})
    assert report.max_error < 1e-9


# ---------------------------------------------------------------------------
# hypothesis properties

@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_softmax_normalization_property(seed):
    x = np.random.default_rng(seed).standard_normal((1, 3, 2, 2)) * 10
    y = ad.softmax_channel(Tensor(x)).data
    assert np.abs(y.sum(axis=1) - 1).max() < 1e-6
    assert y.min() > 0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_linear_op_adjointness_property(seed):
    # <L(x), y> == <x, L^T(y)> with L = conv3d; L^T realized by backward
    r = np.random.default_rng(seed)
    x = Tensor(r.standard_normal((1, 2, 4, 4, 4)), requires_grad=True)
    w = Tensor(r.standard_normal((2, 2, 3, 3, 3)))
    y = r.standard_normal((1, 2, 4, 4, 4))
    lx = ad.conv3d(x, w, Tensor(np.zeros(2)), 1, 1)
    backward(ad.reduce_sum(ad.mul(lx, Tensor(y))))
    # backward delivers x.grad == L^T(y); the explicit transpose is the
    # independent route
    ty = ad.conv_transpose3d(Tensor(y), w, Tensor(np.zeros(2)), 1, 1).data
    assert np.abs(x.grad - ty).max() < 1e-4
    lhs = float((lx.data * y).sum())
    rhs = float((x.data * ty).sum())
    assert abs(lhs - rhs) <= 1e-5 * max(abs(lhs), 1.0)
