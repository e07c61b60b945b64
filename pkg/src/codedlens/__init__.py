"""Coded-mask lensless imaging toolkit.

Simulation of coded-aperture optics, classical reconstruction (Wiener and
iterative solvers), image-quality metrics, and a toy-scale learnable-PSF
encoder-decoder trained with a self-contained reverse-mode autodiff engine.
"""

from codedlens.kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"
__all__ = ["KERNEL_BACKEND", "__version__"]
