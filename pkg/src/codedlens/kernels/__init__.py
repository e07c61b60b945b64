"""Convolution kernel backend selection.

The compiled Cython extension is preferred when it imported cleanly; the
pure-numpy fallback is always available. Set CODEDLENS_KERNELS=py (or cy)
to force a backend; see benchmarks/bench_conv.py for a speed comparison.
"""

import os

from codedlens.kernels import _conv_py

_requested = os.environ.get("CODEDLENS_KERNELS", "auto")

if _requested == "py":
    _impl = _conv_py
    BACKEND = "python"
else:
    try:
        from codedlens.kernels import _conv_cy as _impl
        BACKEND = "cython"
    except ImportError:
        if _requested == "cy":
            raise ImportError("compiled kernels requested via CODEDLENS_KERNELS=cy "
                              "but the extension is not built")
        _impl = _conv_py
        BACKEND = "python"

conv2d_forward = _impl.conv2d_forward
conv2d_input_grad = _impl.conv2d_input_grad
conv2d_weight_grad = _impl.conv2d_weight_grad
