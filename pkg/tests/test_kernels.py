"""Strided conv kernels: both backends against a plain python-loop oracle."""

import numpy as np
import pytest

from codedlens import kernels
from codedlens.kernels import _conv_py

try:
    from codedlens.kernels import _conv_cy
except ImportError:
    _conv_cy = None

BACKENDS = [("py", _conv_py)] + ([("cy", _conv_cy)] if _conv_cy else [])


def conv_forward_loops(x, w, stride):
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    oh, ow = (h + stride - 1) // stride, (wd + stride - 1) // stride
    out = np.zeros((n, cout, oh, ow))
    for b in range(n):
        for o in range(cout):
            for i in range(oh):
                for j in range(ow):
                    s = 0.0
                    for c in range(cin):
                        for p in range(kh):
                            for q in range(kw):
                                ii = i * stride + p - ph
                                jj = j * stride + q - pw
                                if 0 <= ii < h and 0 <= jj < wd:
                                    s += x[b, c, ii, jj] * w[o, c, p, q]
                    out[b, o, i, j] = s
    return out


def _cases(rng):
    yield rng.standard_normal((1, 1, 6, 6)), rng.standard_normal((1, 1, 3, 3)), 1
    yield rng.standard_normal((2, 3, 5, 7)), rng.standard_normal((4, 3, 3, 3)), 1
    yield rng.standard_normal((2, 2, 8, 8)), rng.standard_normal((3, 2, 3, 3)), 2
    yield rng.standard_normal((1, 4, 7, 5)), rng.standard_normal((2, 4, 5, 5)), 2
    yield rng.standard_normal((1, 2, 6, 6)), rng.standard_normal((2, 2, 1, 1)), 1


@pytest.mark.parametrize("name,mod", BACKENDS)
def test_forward_matches_loops(name, mod):
    rng = np.random.default_rng(11)
    for x, w, stride in _cases(rng):
        np.testing.assert_allclose(mod.conv2d_forward(x, w, stride),
                                   conv_forward_loops(x, w, stride),
                                   atol=1e-12, err_msg=f"{name} {x.shape} s={stride}")


@pytest.mark.parametrize("name,mod", BACKENDS)
def test_input_grad_is_adjoint(name, mod):
    # <conv(x), gy> == <x, input_grad(gy)> defines the backward pass exactly
    rng = np.random.default_rng(12)
    for x, w, stride in _cases(rng):
        y = mod.conv2d_forward(x, w, stride)
        gy = rng.standard_normal(y.shape)
        gx = mod.conv2d_input_grad(gy, w, stride, x.shape[2], x.shape[3])
        assert gx.shape == x.shape
        assert abs(np.sum(y * gy) - np.sum(x * gx)) < 1e-9


@pytest.mark.parametrize("name,mod", BACKENDS)
def test_weight_grad_matches_finite_difference(name, mod):
    rng = np.random.default_rng(13)
    x = rng.standard_normal((2, 2, 6, 6))
    w = rng.standard_normal((3, 2, 3, 3))
    gy = rng.standard_normal(mod.conv2d_forward(x, w, 2).shape)
    gw = mod.conv2d_weight_grad(x, gy, 2, 3, 3)
    assert gw.shape == w.shape
    eps = 1e-6
    for idx in [(0, 0, 0, 0), (1, 1, 2, 1), (2, 0, 1, 2)]:
        wp, wm = w.copy(), w.copy()
        wp[idx] += eps
        wm[idx] -= eps
        num = (np.sum(mod.conv2d_forward(x, wp, 2) * gy)
               - np.sum(mod.conv2d_forward(x, wm, 2) * gy)) / (2 * eps)
        assert abs(num - gw[idx]) < 1e-5


@pytest.mark.skipif(_conv_cy is None, reason="compiled backend not built")
def test_backends_agree():
    rng = np.random.default_rng(14)
    for x, w, stride in _cases(rng):
        np.testing.assert_allclose(
            _conv_cy.conv2d_forward(x, w, stride),
            _conv_py.conv2d_forward(x, w, stride), atol=1e-12)


def test_backend_selection_exports():
    assert kernels.BACKEND in ("python", "cython")
    assert callable(kernels.conv2d_forward)
    assert callable(kernels.conv2d_input_grad)
    assert callable(kernels.conv2d_weight_grad)
