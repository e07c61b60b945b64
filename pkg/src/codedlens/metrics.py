"""Image-quality metrics: PSNR, SSIM, and a self-contained perceptual proxy.

The perceptual distance is a fixed-seed random-feature metric (no pretrained
weights): three rectified 3x3 convolution layers with 2x2 average pooling
between them, compared by mean squared feature difference. It is labeled
"perceptual-proxy" in all reports and is not LPIPS.
"""

import math
from dataclasses import dataclass

import numpy as np

from codedlens import kernels
from codedlens.errors import SizingError

PROXY_CHANNELS = (8, 16, 32)


@dataclass
class MetricReport:
    psnr_db: float
    ssim: float
    perceptual: float
    value_range: float

    def as_dict(self):
        return {"psnr_db": self.psnr_db, "ssim": self.ssim,
                "perceptual": self.perceptual, "value_range": self.value_range}


def _check_extents(a, b):
    if a.shape != b.shape:
        raise SizingError(f"extent mismatch: {a.shape} vs {b.shape}")


def psnr(a, b, value_range=1.0):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_extents(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(value_range ** 2 / mse)


def gaussian_window(size=11, sigma=1.5):
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    win = np.outer(g, g)
    return win / win.sum()


def _filter_valid(x, win):
    k = win.shape[0]
    view = np.lib.stride_tricks.sliding_window_view(x, (k, k))
    return np.einsum("ijpq,pq->ij", view, win)


def ssim(a, b, value_range=1.0, window_size=11, sigma=1.5):
    """Mean local SSIM over a Gaussian window (valid region)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_extents(a, b)
    h, w = a.shape[-2:]
    if h < window_size or w < window_size:
        raise SizingError(f"extents {h}x{w} smaller than the {window_size}-pixel window")
    if a.ndim == 3:
        return float(np.mean([ssim(ap, bp, value_range, window_size, sigma)
                              for ap, bp in zip(a, b)]))
    win = gaussian_window(window_size, sigma)
    c1 = (0.01 * value_range) ** 2
    c2 = (0.03 * value_range) ** 2
    mu_a = _filter_valid(a, win)
    mu_b = _filter_valid(b, win)
    var_a = _filter_valid(a * a, win) - mu_a ** 2
    var_b = _filter_valid(b * b, win) - mu_b ** 2
    cov = _filter_valid(a * b, win) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def proxy_weights(seed, in_channels=1):
    """Deterministic random filter bank for the perceptual proxy."""
    rng = np.random.default_rng(seed)
    weights = []
    cin = in_channels
    for cout in PROXY_CHANNELS:
        w = rng.standard_normal((cout, cin, 3, 3)) * math.sqrt(2.0 / (cin * 9))
        weights.append(w)
        cin = cout
    return weights


def proxy_features(x, weights):
    """Feature stack of the random extractor: conv3x3 -> relu -> 2x2 avg pool."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None, None]
    feats = []
    for w in weights:
        x = np.maximum(kernels.conv2d_forward(x, w, stride=1), 0.0)
        feats.append(x)
        h, wd = x.shape[-2:]
        x = x[:, :, :h - h % 2, :wd - wd % 2]
        x = 0.25 * (x[:, :, ::2, ::2] + x[:, :, 1::2, ::2]
                    + x[:, :, ::2, 1::2] + x[:, :, 1::2, 1::2])
    return feats


def perceptual_proxy(a, b, seed=0):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_extents(a, b)
    weights = proxy_weights(seed)
    fa = proxy_features(a, weights)
    fb = proxy_features(b, weights)
    return float(np.mean([np.mean((x - y) ** 2) for x, y in zip(fa, fb)]))


def report(a, b, value_range=1.0, seed=0):
    return MetricReport(psnr_db=psnr(a, b, value_range),
                        ssim=ssim(a, b, value_range),
                        perceptual=perceptual_proxy(a, b, seed),
                        value_range=value_range)
