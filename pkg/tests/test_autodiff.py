"""Reverse-mode autodiff: every primitive checked against central differences."""

import numpy as np
import pytest

from codedlens import autodiff as ad
from codedlens.errors import ConfigError

TOL = 1e-5


def _sum(v):
    return ad.mean_reduce(v)


def check(f, inputs, tol=TOL, seed=0):
    err = ad.grad_check(f, inputs, seed=seed)
    assert err < tol, f"worst relative gradient error {err:.3e}"


def test_add_multiply_with_broadcasting():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 3, 4, 4))
    b = rng.standard_normal((1, 3, 1, 1))
    check(lambda v: _sum(ad.multiply(ad.add(v[0], v[1]), v[0])), [x, b])


def test_scalar_mul():
    rng = np.random.default_rng(2)
    check(lambda v: _sum(ad.scalar_mul(v[0], -2.5)), [rng.standard_normal((3, 3))])


def test_relu():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((6, 6))
    x[np.abs(x) < 1e-2] = 0.5  # keep clear of the kink
    check(lambda v: _sum(ad.multiply(ad.relu(v[0]), v[0])), [x])


def test_sigmoid_exp_reciprocal():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((5, 5))
    check(lambda v: _sum(ad.sigmoid(v[0])), [x])
    check(lambda v: _sum(ad.exp(v[0])), [0.3 * x])
    check(lambda v: _sum(ad.reciprocal(v[0])), [x + 3.0])


def test_sigmoid_extreme_inputs_stable():
    v = ad.parameter(np.array([[-800.0, 800.0]]))
    out = ad.sigmoid(v)
    assert np.all(np.isfinite(out.value))
    ad.backward(ad.mean_reduce(out))
    assert np.all(np.isfinite(v.grad))


def test_conv2d_zero_same_grads():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((2, 2, 6, 6))
    w = rng.standard_normal((3, 2, 3, 3))
    check(lambda v: _sum(ad.conv2d_zero_same(v[0], v[1])), [x, w])
    check(lambda v: _sum(ad.conv2d_zero_same(v[0], v[1], stride=2)), [x, w])


def test_pointwise_conv_grads():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((2, 3, 4, 4))
    w = rng.standard_normal((5, 3))
    check(lambda v: _sum(ad.pointwise_conv(v[0], v[1])), [x, w])


def test_pooling_and_reductions():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((2, 3, 8, 8))
    check(lambda v: _sum(ad.global_avg_pool(v[0])), [x])
    check(lambda v: _sum(ad.avg_pool2(v[0])), [x])
    check(lambda v: ad.mean_reduce(v[0]), [x])
    check(lambda v: ad.mean_reduce(ad.spatial_sum(v[0])), [x])


def test_bilinear_upsample_grad_and_forward():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((1, 2, 4, 4))
    check(lambda v: _sum(ad.multiply(ad.bilinear_upsample(v[0], 2),
                                     ad.bilinear_upsample(v[0], 2))), [x])
    from codedlens import tensor_ops
    out = ad.bilinear_upsample(ad.constant(x), 2)
    np.testing.assert_allclose(out.value, tensor_ops.bilinear_upsample(x, 2), atol=1e-12)


def test_concat_crop_pad():
    rng = np.random.default_rng(9)
    a = rng.standard_normal((1, 2, 4, 4))
    b = rng.standard_normal((1, 3, 4, 4))
    check(lambda v: _sum(ad.concat_channels([v[0], v[1]])), [a, b])
    x = rng.standard_normal((1, 2, 6, 6))
    check(lambda v: _sum(ad.multiply(ad.crop(v[0], 1, 2, 3, 3),
                                     ad.crop(v[0], 1, 2, 3, 3))), [x])
    check(lambda v: _sum(ad.multiply(ad.zero_pad_spatial(v[0], (8, 8)),
                                     ad.zero_pad_spatial(v[0], (8, 8)))), [x])


def test_zero_pad_is_centered():
    x = np.ones((1, 1, 4, 4))
    out = ad.zero_pad_spatial(ad.constant(x), (8, 8)).value
    assert out.shape == (1, 1, 8, 8)
    assert out[0, 0, 2:6, 2:6].sum() == 16.0
    assert out.sum() == 16.0


def test_fft_pipeline_grads():
    # real losses through fft2/ifft2/complex ops, checked against central
    # differences on the real inputs
    rng = np.random.default_rng(10)
    x = rng.standard_normal((1, 1, 4, 4))
    k = rng.standard_normal((1, 1, 4, 4))

    def wiener_like(v):
        xf = ad.fft2(v[0])
        kf = ad.fft2(v[1])
        num = ad.complex_mul(ad.complex_conj(kf), xf)
        den = ad.magnitude_sq(kf) + ad.constant(np.full((1, 1, 4, 4), 0.5))
        out = ad.real_part(ad.ifft2(ad.complex_scale(num, ad.reciprocal(den))))
        return _sum(ad.multiply(out, out))

    check(wiener_like, [x, k])


def test_magnitude_sq_and_real_part_values():
    x = np.array([[1.0, -2.0], [0.5, 3.0]])[None, None]
    xf = ad.fft2(ad.constant(x))
    mag = ad.magnitude_sq(xf)
    np.testing.assert_allclose(mag.value, np.abs(np.fft.fft2(x)) ** 2, atol=1e-12)
    rp = ad.real_part(ad.ifft2(xf))
    np.testing.assert_allclose(rp.value, x, atol=1e-12)


def test_fft_round_trip_gradient_is_identity():
    rng = np.random.default_rng(11)
    x = rng.standard_normal((1, 1, 8, 8))
    v = ad.parameter(x)
    y = ad.real_part(ad.ifft2(ad.fft2(v)))
    g = rng.standard_normal(y.shape)
    ad.backward(ad.mean_reduce(ad.multiply(y, ad.constant(g * g.size))))
    np.testing.assert_allclose(v.grad, g, atol=1e-10)


def test_backward_needs_scalar():
    v = ad.parameter(np.ones((2, 2)))
    with pytest.raises(ConfigError):
        ad.backward(ad.relu(v))


def test_grad_accumulates_across_reuse():
    # d/dx mean(x*x + x*x) = 4x/n: the node feeding two branches must sum
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    v = ad.parameter(x)
    y = ad.add(ad.multiply(v, v), ad.multiply(v, v))
    ad.backward(ad.mean_reduce(y))
    np.testing.assert_allclose(v.grad, 4.0 * x / x.size, atol=1e-12)


def test_zero_grad_resets():
    v = ad.parameter(np.ones((2, 2)))
    ad.backward(ad.mean_reduce(ad.multiply(v, v)))
    assert v.grad is not None
    v.zero_grad()
    assert v.grad is None


def test_constant_gets_no_grad():
    c = ad.constant(np.ones((2, 2)))
    v = ad.parameter(np.ones((2, 2)))
    ad.backward(ad.mean_reduce(ad.multiply(c, v)))
    assert c.grad is None and v.grad is not None


def test_grad_check_epsilon_bounds():
    with pytest.raises(ConfigError):
        ad.grad_check(lambda v: ad.mean_reduce(v[0]), [np.ones(3)], epsilon=1e-2)
    with pytest.raises(ConfigError):
        ad.grad_check(lambda v: ad.mean_reduce(v[0]), [np.ones(3)], epsilon=1e-9)
