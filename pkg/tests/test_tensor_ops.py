"""Frequency/convolution primitives checked against brute-force loop oracles."""

import numpy as np
import pytest

from codedlens import tensor_ops as T
from codedlens.errors import ConfigError, SizingError


def dft2_loops(x):
    # O(n^4) direct DFT, the independent oracle for fft2
    h, w = x.shape
    out = np.zeros((h, w), dtype=complex)
    for u in range(h):
        for v in range(w):
            s = 0.0 + 0.0j
            for i in range(h):
                for j in range(w):
                    s += x[i, j] * np.exp(-2j * np.pi * (u * i / h + v * j / w))
            out[u, v] = s
    return out


def circular_conv_loops(x, k):
    h, w = x.shape
    kh, kw = k.shape
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            s = 0.0
            for p in range(kh):
                for q in range(kw):
                    s += k[p, q] * x[(i - p) % h, (j - q) % w]
            out[i, j] = s
    return out


def zero_same_conv_loops(x, k):
    h, w = x.shape
    kh, kw = k.shape
    i0, j0 = (kh - 1) // 2, (kw - 1) // 2
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            s = 0.0
            for p in range(kh):
                for q in range(kw):
                    ii, jj = i + i0 - p, j + j0 - q
                    if 0 <= ii < h and 0 <= jj < w:
                        s += k[p, q] * x[ii, jj]
            out[i, j] = s
    return out


def test_is_pow2():
    assert [n for n in range(1, 20) if T.is_pow2(n)] == [1, 2, 4, 8, 16]
    assert not T.is_pow2(0)
    assert not T.is_pow2(-4)


def test_next_pow2():
    assert [T.next_pow2(n) for n in (1, 2, 3, 5, 8, 9, 17)] == [1, 2, 4, 8, 8, 16, 32]


def test_fft2_matches_direct_dft():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((8, 4))
    np.testing.assert_allclose(T.fft2(x), dft2_loops(x), atol=1e-10)


def test_fft2_round_trip():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((2, 16, 8))
    np.testing.assert_allclose(np.real(T.ifft2(T.fft2(x))), x, atol=1e-12)


def test_fft_rejects_non_pow2():
    with pytest.raises(SizingError):
        T.fft2(np.zeros((6, 8)))
    with pytest.raises(SizingError):
        T.ifft2(np.zeros((8, 12)))


def test_circular_conv_matches_loops():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((8, 8))
    k = rng.standard_normal((3, 3))
    np.testing.assert_allclose(T.conv2d(x, k, mode="circular"),
                               circular_conv_loops(x, k), atol=1e-10)


def test_zero_same_conv_matches_loops():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((8, 7))
    for ksize in ((3, 3), (5, 3), (1, 1)):
        k = rng.standard_normal(ksize)
        np.testing.assert_allclose(T.conv2d(x, k, mode="zero-same"),
                                   zero_same_conv_loops(x, k), atol=1e-10)


def test_conv_batch_axes_pass_through():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((2, 3, 8, 8))
    k = rng.standard_normal((3, 3))
    out = T.conv2d(x, k, mode="circular")
    assert out.shape == x.shape
    np.testing.assert_allclose(out[1, 2], T.conv2d(x[1, 2], k, mode="circular"),
                               atol=1e-12)


def test_conv_rejects_oversized_kernel_and_bad_mode():
    with pytest.raises(SizingError):
        T.conv2d(np.zeros((4, 4)), np.zeros((5, 5)))
    with pytest.raises(ConfigError):
        T.conv2d(np.zeros((4, 4)), np.zeros((3, 3)), mode="reflect")


def test_correlate_is_adjoint_of_circular_conv():
    # <conv(x,k), y> == <x, correlate(y,k)> for all x, y
    rng = np.random.default_rng(8)
    k = rng.standard_normal((3, 3))
    x = rng.standard_normal((8, 8))
    y = rng.standard_normal((8, 8))
    lhs = np.sum(T.conv2d(x, k, mode="circular") * y)
    rhs = np.sum(x * T.correlate2d(y, k))
    assert abs(lhs - rhs) < 1e-10


def test_bilinear_upsample_constant_and_linear():
    c = T.bilinear_upsample(np.full((4, 4), 2.5), 2)
    np.testing.assert_allclose(c, 2.5)
    # a linear ramp stays linear away from the clamped borders
    ramp = np.tile(np.arange(8.0), (8, 1))
    up = T.bilinear_upsample(ramp, 2)
    diffs = np.diff(up[0, 2:-2])
    np.testing.assert_allclose(diffs, 0.5, atol=1e-12)


def test_bilinear_upsample_hand_case():
    x = np.array([[0.0, 1.0]])
    up = T.bilinear_upsample(x, 2)
    # sample centers at -0.25, 0.25, 0.75, 1.25 clamp to [0, 1]
    np.testing.assert_allclose(up[0], [0.0, 0.25, 0.75, 1.0])


def test_bilinear_upsample_rejects_bad_factor():
    with pytest.raises(ConfigError):
        T.bilinear_upsample(np.zeros((4, 4)), 0)
    with pytest.raises(ConfigError):
        T.bilinear_upsample(np.zeros((4, 4)), 1.5)


def test_pad_to_pow2_round_trip():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((5, 12))
    padded, extents = T.pad_to_pow2(x)
    assert padded.shape == (8, 16)
    assert extents == (5, 12)
    np.testing.assert_array_equal(T.crop(padded, extents), x)
    assert np.all(padded[5:, :] == 0) and np.all(padded[:, 12:] == 0)


def test_pad_to_pow2_noop_copies():
    x = np.ones((8, 8))
    padded, extents = T.pad_to_pow2(x)
    assert extents == (8, 8)
    padded[0, 0] = 5.0
    assert x[0, 0] == 1.0
