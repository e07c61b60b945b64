"""Dense 2-D array primitives: FFT, convolution/correlation, resampling.

Arrays are plain float64 / complex128 ndarrays; operations act on the last
two axes so leading batch/channel axes pass through. FFTs are restricted to
power-of-two extents (callers pad via pad_to_pow2), which keeps the
round-trip contract trivial and matches how the rest of the package sizes
its planes.
"""

import numpy as np

from codedlens.errors import ConfigError, SizingError


def is_pow2(n):
    return n >= 1 and (n & (n - 1)) == 0


def next_pow2(n):
    p = 1
    while p < n:
        p *= 2
    return p


def _check_pow2(x):
    h, w = x.shape[-2:]
    if not (is_pow2(h) and is_pow2(w)):
        raise SizingError(f"extents {h}x{w} are not powers of two; pad first")


def fft2(x):
    """Unnormalized forward DFT over the last two axes."""
    _check_pow2(x)
    return np.fft.fft2(np.asarray(x))


def ifft2(x):
    """Normalized inverse DFT over the last two axes."""
    _check_pow2(x)
    return np.fft.ifft2(np.asarray(x))


def conv2d(x, k, mode="circular"):
    """2-D convolution of plane(s) x with kernel k.

    circular: cyclic convolution with k embedded at the origin; requires
    kernel extents <= image extents. zero-same: zero-padded linear
    convolution cropped to the input extent (scipy 'same' centering).
    """
    x = np.asarray(x, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    h, w = x.shape[-2:]
    kh, kw = k.shape
    if kh > h or kw > w:
        raise SizingError(f"kernel {kh}x{kw} larger than image {h}x{w}")
    if mode == "circular":
        kemb = np.zeros((h, w))
        kemb[:kh, :kw] = k
        return np.real(np.fft.ifft2(np.fft.fft2(x) * np.fft.fft2(kemb)))
    if mode == "zero-same":
        sh, sw = h + kh - 1, w + kw - 1
        full = np.real(np.fft.ifft2(np.fft.fft2(x, s=(sh, sw)) * np.fft.fft2(k, s=(sh, sw))))
        i0, j0 = (kh - 1) // 2, (kw - 1) // 2
        return full[..., i0:i0 + h, j0:j0 + w]
    raise ConfigError(f"unknown convolution mode {mode!r}")


def correlate2d(x, k):
    """Circular cross-correlation; the adjoint of circular conv2d."""
    x = np.asarray(x, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    h, w = x.shape[-2:]
    kh, kw = k.shape
    if kh > h or kw > w:
        raise SizingError(f"kernel {kh}x{kw} larger than image {h}x{w}")
    kemb = np.zeros((h, w))
    kemb[:kh, :kw] = k
    return np.real(np.fft.ifft2(np.fft.fft2(x) * np.conj(np.fft.fft2(kemb))))


def bilinear_upsample(x, factor):
    """Upsample the last two axes by an integer factor (align-corners false)."""
    if int(factor) != factor or factor < 1:
        raise ConfigError(f"upsample factor must be a positive integer, got {factor}")
    factor = int(factor)
    if factor == 1:
        return np.array(x, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    h, w = x.shape[-2:]
    out = x
    for axis, n in ((-2, h), (-1, w)):
        src = (np.arange(n * factor) + 0.5) / factor - 0.5
        lo = np.clip(np.floor(src).astype(int), 0, n - 1)
        hi = np.clip(lo + 1, 0, n - 1)
        frac = np.clip(src - np.floor(src), 0.0, 1.0)
        frac[src < 0] = 0.0
        a = np.take(out, lo, axis=axis)
        b = np.take(out, hi, axis=axis)
        shape = [1] * out.ndim
        shape[axis] = n * factor
        frac = frac.reshape(shape)
        out = a * (1 - frac) + b * frac
    return out


def pad_to_pow2(x):
    """Zero-pad the last two axes up to the next powers of two.

    Returns (padded, (h, w)) with the original extents for later cropping.
    """
    x = np.asarray(x, dtype=np.float64)
    h, w = x.shape[-2:]
    ph, pw = next_pow2(h), next_pow2(w)
    if ph == h and pw == w:
        return x.copy(), (h, w)
    pad = [(0, 0)] * (x.ndim - 2) + [(0, ph - h), (0, pw - w)]
    return np.pad(x, pad), (h, w)


def crop(x, extents):
    """Crop the last two axes back to (h, w)."""
    h, w = extents
    return np.asarray(x)[..., :h, :w]
