"""Frequency-domain Wiener restoration.

Used standalone as a classical baseline and as the numerical core of the
network's frequency fusion block. The transfer function is
conj(P) / (|P|^2 + delta) applied to the measurement spectrum.
"""

from dataclasses import dataclass

import numpy as np

from codedlens import tensor_ops
from codedlens.errors import ConfigError, SizingError


@dataclass
class WienerConfig:
    delta: float = 1e-2

    def __post_init__(self):
        if self.delta <= 0:
            raise ConfigError(f"delta must be > 0, got {self.delta}")


def wiener_transfer(psf_freq, delta):
    """Transfer function conj(P) / (|P|^2 + delta), elementwise."""
    if delta <= 0:
        raise ConfigError(f"delta must be > 0, got {delta}")
    p = np.asarray(psf_freq)
    return np.conj(p) / (np.abs(p) ** 2 + delta)


def wiener_restore(measurement, psf, cfg):
    """Restore a measurement through the Wiener filter of its PSF."""
    b = np.asarray(measurement, dtype=np.float64)
    h, w = b.shape[-2:]
    if not (tensor_ops.is_pow2(h) and tensor_ops.is_pow2(w)):
        raise SizingError(f"measurement extents {h}x{w} must be powers of two")
    transfer = wiener_transfer(psf.transfer((h, w)), cfg.delta)
    restored = np.fft.ifft2(np.fft.fft2(b) * transfer)
    real = np.real(restored)
    resid = np.max(np.abs(np.imag(restored)))
    scale = max(np.max(np.abs(real)), 1.0)
    if resid > 1e-9 * scale:
        raise RuntimeError(f"imaginary residual {resid:.3e} unexpectedly large")
    return real
