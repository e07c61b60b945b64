"""Coded-mask synthesis, PSF construction, and the forward measurement model.

The desk-scale optical model is ideal shadow casting: the PSF is the
normalized mask pattern itself. Its kernel is circularly shifted so the
center of mass sits at index (0,0) before the cached transform, which makes
frequency-domain restoration shift-free; the forward model convolves with
that same centered kernel so simulation and inversion agree exactly.
"""

from dataclasses import dataclass

import numpy as np

from codedlens import tensor_ops
from codedlens.errors import ConfigError, DegenerateMaskError, SizingError

PATTERNS = ("horizontal_lines", "vertical_lines", "grid", "random")


@dataclass
class CodedMask:
    pattern: str
    plane: np.ndarray          # (H, W), entries in [0, 1]
    seed: int = 0
    density: float | None = None


@dataclass
class NoiseModel:
    kind: str = "none"         # none | gaussian | poisson
    sigma: float = 0.01
    peak: float = 1000.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian", "poisson"):
            raise ConfigError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0:
            raise ConfigError("sigma must be >= 0")
        if self.peak <= 0:
            raise ConfigError("peak must be > 0")


class PointSpreadFunction:
    """Normalized nonnegative kernel with its centered transform cached."""

    def __init__(self, kernel):
        kernel = np.asarray(kernel, dtype=np.float64)
        if np.any(kernel < 0):
            raise ConfigError("PSF kernel entries must be nonnegative")
        s = kernel.sum()
        if s <= 0:
            raise DegenerateMaskError("PSF kernel sums to zero")
        self.kernel = kernel / s
        self._transfers = {}

    @property
    def transform(self):
        """fft2 of the zero-padded, origin-centered kernel at its own size."""
        padded, _ = tensor_ops.pad_to_pow2(self.kernel)
        return self.transfer(padded.shape)

    def centered_kernel(self, extents):
        """Kernel embedded in an (h, w) plane, center of mass rolled to (0,0)."""
        h, w = extents
        kh, kw = self.kernel.shape
        if kh > h or kw > w:
            raise SizingError(f"kernel {kh}x{kw} exceeds plane {h}x{w}")
        plane = np.zeros((h, w))
        plane[:kh, :kw] = self.kernel
        ci = int(round(float(np.sum(np.arange(kh) * self.kernel.sum(axis=1)))))
        cj = int(round(float(np.sum(np.arange(kw) * self.kernel.sum(axis=0)))))
        return np.roll(plane, (-ci, -cj), axis=(0, 1))

    def transfer(self, extents):
        """fft2 of the centered kernel at the given power-of-two extents."""
        extents = tuple(int(e) for e in extents)
        if extents not in self._transfers:
            self._transfers[extents] = tensor_ops.fft2(self.centered_kernel(extents))
        return self._transfers[extents]


def generate_mask(pattern, extents, seed=0, density=None):
    h, w = extents
    if h < 2 or w < 2:
        raise ConfigError(f"mask extents must be at least 2x2, got {h}x{w}")
    if pattern == "horizontal_lines":
        plane = np.zeros((h, w))
        plane[::2, :] = 1.0
    elif pattern == "vertical_lines":
        plane = np.zeros((h, w))
        plane[:, ::2] = 1.0
    elif pattern == "grid":
        plane = np.zeros((h, w))
        plane[::2, ::2] = 1.0
    elif pattern == "random":
        if density is None or not (0.0 < density < 1.0):
            raise ConfigError(f"random mask needs density in (0,1), got {density}")
        rng = np.random.default_rng(seed)
        plane = (rng.random((h, w)) < density).astype(np.float64)
    else:
        raise ConfigError(f"unknown mask pattern {pattern!r}")
    return CodedMask(pattern=pattern, plane=plane, seed=seed, density=density)


def mask_to_psf(mask):
    """Normalized mask plane as the PSF (ideal shadow-casting model)."""
    if not np.any(mask.plane):
        raise DegenerateMaskError("all-zero mask cannot define a PSF")
    return PointSpreadFunction(mask.plane)


def forward_operator(x, psf):
    """Noiseless forward model: circular convolution with the centered PSF."""
    x = np.asarray(x, dtype=np.float64)
    return np.real(np.fft.ifft2(np.fft.fft2(x) * psf.transfer(x.shape[-2:])))


def adjoint_operator(y, psf):
    """Adjoint of forward_operator."""
    y = np.asarray(y, dtype=np.float64)
    return np.real(np.fft.ifft2(np.fft.fft2(y) * np.conj(psf.transfer(y.shape[-2:]))))


def add_noise(x, noise):
    x = np.asarray(x, dtype=np.float64)
    if noise.kind == "none":
        return x.copy()
    rng = np.random.default_rng(noise.seed)
    if noise.kind == "gaussian":
        if noise.sigma == 0:
            return x.copy()
        return x + rng.normal(0.0, noise.sigma, size=x.shape)
    # poisson
    if np.any(x < 0):
        raise ConfigError("poisson noise requires nonnegative input")
    return rng.poisson(x * noise.peak).astype(np.float64) / noise.peak


def simulate_measurement(obj, psf, noise=None):
    """Blurred (and optionally noisy) observation of an object plane."""
    obj = np.asarray(obj, dtype=np.float64)
    h, w = obj.shape[-2:]
    if not (tensor_ops.is_pow2(h) and tensor_ops.is_pow2(w)):
        raise SizingError(f"object extents {h}x{w} must be powers of two; pad first")
    y = forward_operator(obj, psf)
    if noise is not None and noise.kind != "none":
        y = add_noise(y, noise)
    return np.clip(y, 0.0, None)
