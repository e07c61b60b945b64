"""Pure-numpy fallback for the multi-channel convolution kernels.

All three routines implement strided cross-correlation with zero "same"
padding (pad = (k-1)//2 per side, odd kernels only), the convention used by
the network layers. The tap loop runs over the small kernel footprint and
each tap is one BLAS-backed einsum, so this path stays usable for training
when the compiled extension is unavailable.
"""

import numpy as np


def _out_extent(n, stride):
    return (n + stride - 1) // stride


def conv2d_forward(x, w, stride=1):
    """x: (N,Ci,H,W), w: (Co,Ci,kh,kw) -> (N,Co,Ho,Wo)."""
    n, ci, h, wd = x.shape
    co, ci2, kh, kw = w.shape
    if ci != ci2:
        raise ValueError(f"channel mismatch: input {ci} vs kernel {ci2}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("even kernel extents unsupported")
    ph, pw = kh // 2, kw // 2
    ho, wo = _out_extent(h, stride), _out_extent(wd, stride)
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    y = np.zeros((n, co, ho, wo))
    for p in range(kh):
        for q in range(kw):
            tap = xp[:, :, p:p + stride * ho:stride, q:q + stride * wo:stride]
            y += np.einsum("ncij,oc->noij", tap, w[:, :, p, q])
    return y


def conv2d_input_grad(gy, w, stride, h, wd):
    """Adjoint of conv2d_forward in its first argument."""
    n, co, ho, wo = gy.shape
    co2, ci, kh, kw = w.shape
    if co != co2:
        raise ValueError(f"channel mismatch: grad {co} vs kernel {co2}")
    ph, pw = kh // 2, kw // 2
    gxp = np.zeros((n, ci, h + 2 * ph, wd + 2 * pw))
    for p in range(kh):
        for q in range(kw):
            contrib = np.einsum("noij,oc->ncij", gy, w[:, :, p, q])
            gxp[:, :, p:p + stride * ho:stride, q:q + stride * wo:stride] += contrib
    return gxp[:, :, ph:ph + h, pw:pw + wd]


def conv2d_weight_grad(x, gy, stride, kh, kw):
    """Adjoint of conv2d_forward in its kernel argument."""
    n, ci, h, wd = x.shape
    n2, co, ho, wo = gy.shape
    if n != n2:
        raise ValueError(f"batch mismatch: {n} vs {n2}")
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    gw = np.zeros((co, ci, kh, kw))
    for p in range(kh):
        for q in range(kw):
            tap = xp[:, :, p:p + stride * ho:stride, q:q + stride * wo:stride]
            gw[:, :, p, q] = np.einsum("noij,ncij->oc", gy, tap)
    return gw
