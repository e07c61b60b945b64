# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled multi-channel convolution kernels.

Same contracts as kernels._conv_py: strided cross-correlation with zero
"same" padding, plus its two adjoints. Kept loop-shaped and allocation-free
in the inner body so the C compiler can vectorize the tap accumulation.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def conv2d_forward(cnp.ndarray[double, ndim=4] x,
                   cnp.ndarray[double, ndim=4] w,
                   int stride=1):
    cdef int n = x.shape[0], ci = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef int co = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    if w.shape[1] != ci:
        raise ValueError(f"channel mismatch: input {ci} vs kernel {w.shape[1]}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("even kernel extents unsupported")
    cdef int ph = kh // 2, pw = kw // 2
    cdef int ho = (h + stride - 1) // stride, wo = (wd + stride - 1) // stride
    cdef cnp.ndarray[double, ndim=4] y = np.zeros((n, co, ho, wo))
    cdef double[:, :, :, :] xv = x, wv = w, yv = y
    cdef int b, o, c, i, j, p, q, ii, jj
    cdef double acc
    for b in range(n):
        for o in range(co):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for c in range(ci):
                        for p in range(kh):
                            ii = i * stride + p - ph
                            if ii < 0 or ii >= h:
                                continue
                            for q in range(kw):
                                jj = j * stride + q - pw
                                if jj < 0 or jj >= wd:
                                    continue
                                acc += xv[b, c, ii, jj] * wv[o, c, p, q]
                    yv[b, o, i, j] = acc
    return y


def conv2d_input_grad(cnp.ndarray[double, ndim=4] gy,
                      cnp.ndarray[double, ndim=4] w,
                      int stride, int h, int wd):
    cdef int n = gy.shape[0], co = gy.shape[1], ho = gy.shape[2], wo = gy.shape[3]
    cdef int ci = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    if w.shape[0] != co:
        raise ValueError(f"channel mismatch: grad {co} vs kernel {w.shape[0]}")
    cdef int ph = kh // 2, pw = kw // 2
    cdef cnp.ndarray[double, ndim=4] gx = np.zeros((n, ci, h, wd))
    cdef double[:, :, :, :] gyv = gy, wv = w, gxv = gx
    cdef int b, o, c, i, j, p, q, ii, jj
    cdef double g
    for b in range(n):
        for o in range(co):
            for i in range(ho):
                for j in range(wo):
                    g = gyv[b, o, i, j]
                    for c in range(ci):
                        for p in range(kh):
                            ii = i * stride + p - ph
                            if ii < 0 or ii >= h:
                                continue
                            for q in range(kw):
                                jj = j * stride + q - pw
                                if jj < 0 or jj >= wd:
                                    continue
                                gxv[b, c, ii, jj] += g * wv[o, c, p, q]
    return gx


def conv2d_weight_grad(cnp.ndarray[double, ndim=4] x,
                       cnp.ndarray[double, ndim=4] gy,
                       int stride, int kh, int kw):
    cdef int n = x.shape[0], ci = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef int co = gy.shape[1], ho = gy.shape[2], wo = gy.shape[3]
    if gy.shape[0] != n:
        raise ValueError(f"batch mismatch: {n} vs {gy.shape[0]}")
    cdef int ph = kh // 2, pw = kw // 2
    cdef cnp.ndarray[double, ndim=4] gw = np.zeros((co, ci, kh, kw))
    cdef double[:, :, :, :] xv = x, gyv = gy, gwv = gw
    cdef int b, o, c, i, j, p, q, ii, jj
    cdef double g
    for b in range(n):
        for o in range(co):
            for i in range(ho):
                for j in range(wo):
                    g = gyv[b, o, i, j]
                    for c in range(ci):
                        for p in range(kh):
                            ii = i * stride + p - ph
                            if ii < 0 or ii >= h:
                                continue
                            for q in range(kw):
                                jj = j * stride + q - pw
                                if jj < 0 or jj >= wd:
                                    continue
                                gwv[o, c, p, q] += g * xv[b, c, ii, jj]
    return gw
