"""Minimal reverse-mode automatic differentiation over numpy arrays.

Define-by-run: every operation records the produced Variable with its
parents and a backward closure; backward() replays reachable nodes in exact
reverse recording order. Complex values are differentiated by treating real
and imaginary parts as independent real coordinates (the complex grad array
packs d/d(re) in its real slot and d/d(im) in its imaginary slot), which is
exactly what central finite differences verify.
"""

import itertools

import numpy as np

from codedlens import kernels
from codedlens.errors import ConfigError, SizingError

_counter = itertools.count()


class Variable:
    """Autodiff node: value, lazily materialized grad, backward rule."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "_order")

    def __init__(self, value, requires_grad=False, parents=(), backward=None):
        self.value = np.asarray(value)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward
        self._order = next(_counter)

    @property
    def shape(self):
        return self.value.shape

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad = self.grad + g

    def zero_grad(self):
        self.grad = None

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scalar_mul(other, -1.0))

    def __mul__(self, other):
        return multiply(self, other)

    def __repr__(self):
        return f"Variable(shape={self.value.shape}, requires_grad={self.requires_grad})"


def constant(value):
    return Variable(np.asarray(value, dtype=np.float64))


def parameter(value):
    return Variable(np.asarray(value, dtype=np.float64), requires_grad=True)


def _as_var(x):
    return x if isinstance(x, Variable) else constant(x)


def backward(loss):
    """Populate grads of all requires_grad ancestors of a scalar loss."""
    if int(np.prod(loss.value.shape)) != 1:
        raise ConfigError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    nodes = []
    seen = set()
    stack = [loss]
    while stack:
        v = stack.pop()
        if id(v) in seen or not v.requires_grad:
            continue
        seen.add(id(v))
        nodes.append(v)
        stack.extend(v._parents)
    nodes.sort(key=lambda v: v._order, reverse=True)
    loss.accumulate(np.ones_like(loss.value))
    for v in nodes:
        if v._backward is not None and v.grad is not None:
            v._backward(v.grad)


def _unbroadcast(g, shape):
    """Sum g down to the given shape (adjoint of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# real elementwise primitives


def add(a, b):
    a, b = _as_var(a), _as_var(b)
    out_val = a.value + b.value
    out = Variable(out_val, parents=(a, b))

    def bwd(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.value.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g, b.value.shape))
    out._backward = bwd
    return out


def multiply(a, b):
    a, b = _as_var(a), _as_var(b)
    out = Variable(a.value * b.value, parents=(a, b))

    def bwd(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * b.value, a.value.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * a.value, b.value.shape))
    out._backward = bwd
    return out


def scalar_mul(a, c):
    a = _as_var(a)
    c = float(c)
    out = Variable(a.value * c, parents=(a,))

    def bwd(g):
        a.accumulate(g * c)
    out._backward = bwd
    return out


def relu(a):
    out = Variable(np.maximum(a.value, 0.0), parents=(a,))

    def bwd(g):
        a.accumulate(g * (a.value > 0))
    out._backward = bwd
    return out


def sigmoid(a):
    v = a.value
    s = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))),
                 np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))
    out = Variable(s, parents=(a,))

    def bwd(g):
        a.accumulate(g * s * (1.0 - s))
    out._backward = bwd
    return out


def exp(a):
    y = np.exp(a.value)
    out = Variable(y, parents=(a,))

    def bwd(g):
        a.accumulate(g * y)
    out._backward = bwd
    return out


def reciprocal(a):
    y = 1.0 / a.value
    out = Variable(y, parents=(a,))

    def bwd(g):
        a.accumulate(-g * y * y)
    out._backward = bwd
    return out


# ---------------------------------------------------------------------------
# structural primitives (N, C, H, W)


def conv2d_zero_same(x, w, stride=1):
    """Strided cross-correlation with zero "same" padding; odd kernels."""
    if x.value.ndim != 4 or w.value.ndim != 4:
        raise SizingError("conv2d_zero_same expects 4-D input and kernel")
    if x.value.shape[1] != w.value.shape[1]:
        raise SizingError(f"channel mismatch: {x.value.shape[1]} vs {w.value.shape[1]}")
    n, ci, h, wd = x.value.shape
    out = Variable(kernels.conv2d_forward(x.value, w.value, stride), parents=(x, w))

    def bwd(g):
        if x.requires_grad:
            x.accumulate(kernels.conv2d_input_grad(g, w.value, stride, h, wd))
        if w.requires_grad:
            w.accumulate(kernels.conv2d_weight_grad(
                x.value, g, stride, w.value.shape[2], w.value.shape[3]))
    out._backward = bwd
    return out


def pointwise_conv(x, w):
    """1x1 convolution: w has shape (C_out, C_in)."""
    if x.value.shape[1] != w.value.shape[1]:
        raise SizingError(f"channel mismatch: {x.value.shape[1]} vs {w.value.shape[1]}")
    out = Variable(np.einsum("ncij,oc->noij", x.value, w.value), parents=(x, w))

    def bwd(g):
        if x.requires_grad:
            x.accumulate(np.einsum("noij,oc->ncij", g, w.value))
        if w.requires_grad:
            w.accumulate(np.einsum("noij,ncij->oc", g, x.value))
    out._backward = bwd
    return out


def global_avg_pool(x):
    n, c, h, w = x.value.shape
    out = Variable(x.value.mean(axis=(2, 3), keepdims=True), parents=(x,))

    def bwd(g):
        x.accumulate(np.broadcast_to(g / (h * w), x.value.shape))
    out._backward = bwd
    return out


def spatial_sum(x):
    """Sum over H, W with keepdims."""
    out = Variable(x.value.sum(axis=(2, 3), keepdims=True), parents=(x,))

    def bwd(g):
        x.accumulate(np.broadcast_to(g, x.value.shape))
    out._backward = bwd
    return out


def mean_reduce(x):
    """Mean over all elements -> (1,1,1,1) scalar."""
    size = x.value.size
    out = Variable(np.full((1, 1, 1, 1), x.value.mean()), parents=(x,))

    def bwd(g):
        x.accumulate(np.full(x.value.shape, float(np.sum(g)) / size))
    out._backward = bwd
    return out


def avg_pool2(x):
    """2x2 average pooling, stride 2; odd trailing rows/columns dropped."""
    n, c, h, w = x.value.shape
    he, we = h - h % 2, w - w % 2
    v = x.value[:, :, :he, :we]
    out_val = 0.25 * (v[:, :, ::2, ::2] + v[:, :, 1::2, ::2]
                      + v[:, :, ::2, 1::2] + v[:, :, 1::2, 1::2])
    out = Variable(out_val, parents=(x,))

    def bwd(g):
        gx = np.zeros_like(x.value)
        spread = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * 0.25
        gx[:, :, :he, :we] = spread
        x.accumulate(gx)
    out._backward = bwd
    return out


def _upsample_axis_plan(n, factor):
    src = (np.arange(n * factor) + 0.5) / factor - 0.5
    lo = np.clip(np.floor(src).astype(int), 0, n - 1)
    hi = np.clip(lo + 1, 0, n - 1)
    frac = np.clip(src - np.floor(src), 0.0, 1.0)
    frac[src < 0] = 0.0
    return lo, hi, frac


def bilinear_upsample(x, factor):
    if int(factor) != factor or factor < 1:
        raise ConfigError(f"upsample factor must be a positive integer, got {factor}")
    factor = int(factor)
    if factor == 1:
        return add(x, 0.0)
    n, c, h, w = x.value.shape
    lo_h, hi_h, f_h = _upsample_axis_plan(h, factor)
    lo_w, hi_w, f_w = _upsample_axis_plan(w, factor)
    fh = f_h[:, None]
    fw = f_w[None, :]

    def fwd(v):
        rows = v[:, :, lo_h, :] * (1 - fh) + v[:, :, hi_h, :] * fh
        return rows[:, :, :, lo_w] * (1 - fw) + rows[:, :, :, hi_w] * fw

    out = Variable(fwd(x.value), parents=(x,))

    def bwd(g):
        grows = np.zeros((n, c, h * factor, w))
        np.add.at(grows, (slice(None), slice(None), slice(None), lo_w), g * (1 - fw))
        np.add.at(grows, (slice(None), slice(None), slice(None), hi_w), g * fw)
        gx = np.zeros((n, c, h, w))
        np.add.at(gx, (slice(None), slice(None), lo_h, slice(None)), grows * (1 - fh))
        np.add.at(gx, (slice(None), slice(None), hi_h, slice(None)), grows * fh)
        x.accumulate(gx)
    out._backward = bwd
    return out


def concat_channels(parts):
    parts = [_as_var(p) for p in parts]
    sizes = [p.value.shape[1] for p in parts]
    out = Variable(np.concatenate([p.value for p in parts], axis=1), parents=tuple(parts))

    def bwd(g):
        off = 0
        for p, c in zip(parts, sizes):
            if p.requires_grad:
                p.accumulate(g[:, off:off + c])
            off += c
    out._backward = bwd
    return out


def crop(x, top, left, height, width):
    n, c, h, w = x.value.shape
    if top + height > h or left + width > w:
        raise SizingError(f"crop ({top},{left},{height},{width}) exceeds plane {h}x{w}")
    out = Variable(x.value[:, :, top:top + height, left:left + width], parents=(x,))

    def bwd(g):
        gx = np.zeros_like(x.value)
        gx[:, :, top:top + height, left:left + width] = g
        x.accumulate(gx)
    out._backward = bwd
    return out


def zero_pad_spatial(x, target_extents):
    """Center the plane inside target extents with zero padding."""
    n, c, h, w = x.value.shape
    th, tw = target_extents
    if th < h or tw < w:
        raise SizingError(f"target {th}x{tw} smaller than input {h}x{w}")
    if (th - h) % 2 or (tw - w) % 2:
        raise SizingError(f"padding residue from {h}x{w} to {th}x{tw} is odd")
    ph, pw = (th - h) // 2, (tw - w) // 2
    out = Variable(np.pad(x.value, ((0, 0), (0, 0), (ph, ph), (pw, pw))), parents=(x,))

    def bwd(g):
        x.accumulate(g[:, :, ph:ph + h, pw:pw + w])
    out._backward = bwd
    return out


# ---------------------------------------------------------------------------
# complex primitives (real/imaginary parts are independent real coordinates)


def _check_pow2_extents(x):
    h, w = x.value.shape[-2:]
    if (h & (h - 1)) or (w & (w - 1)):
        raise SizingError(f"extents {h}x{w} are not powers of two")


def fft2(x):
    """Real input -> complex spectrum (unnormalized DFT over last two axes)."""
    _check_pow2_extents(x)
    h, w = x.value.shape[-2:]
    out = Variable(np.fft.fft2(x.value), parents=(x,))

    def bwd(g):
        x.accumulate(np.real(np.fft.ifft2(g)) * (h * w))
    out._backward = bwd
    return out


def ifft2(x):
    """Complex spectrum -> complex plane (normalized inverse DFT)."""
    _check_pow2_extents(x)
    h, w = x.value.shape[-2:]
    out = Variable(np.fft.ifft2(x.value), parents=(x,))

    def bwd(g):
        x.accumulate(np.fft.fft2(g) / (h * w))
    out._backward = bwd
    return out


def complex_mul(a, b):
    out = Variable(a.value * b.value, parents=(a, b))

    def bwd(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * np.conj(b.value), a.value.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * np.conj(a.value), b.value.shape))
    out._backward = bwd
    return out


def complex_conj(a):
    out = Variable(np.conj(a.value), parents=(a,))

    def bwd(g):
        a.accumulate(np.conj(g))
    out._backward = bwd
    return out


def magnitude_sq(a):
    """|z|^2 as a real tensor."""
    out = Variable(np.real(a.value) ** 2 + np.imag(a.value) ** 2, parents=(a,))

    def bwd(g):
        a.accumulate(2.0 * g * a.value)
    out._backward = bwd
    return out


def real_part(a):
    out = Variable(np.real(a.value).copy(), parents=(a,))

    def bwd(g):
        a.accumulate(g.astype(np.complex128))
    out._backward = bwd
    return out


def complex_scale(c, r):
    """Complex tensor times a real (broadcastable) tensor."""
    out = Variable(c.value * r.value, parents=(c, r))

    def bwd(g):
        if c.requires_grad:
            c.accumulate(_unbroadcast(g * r.value, c.value.shape))
        if r.requires_grad:
            r.accumulate(_unbroadcast(np.real(g * np.conj(c.value)), r.value.shape))
    out._backward = bwd
    return out


# ---------------------------------------------------------------------------
# verification


def grad_check(f, inputs, epsilon=1e-5, max_coords=32, seed=0):
    """Worst relative discrepancy between backward() and central differences.

    f maps a list of Variables to a scalar Variable; inputs is a list of
    arrays. Checks a random subset of at most max_coords coordinates per
    input.
    """
    if not (1e-8 <= epsilon <= 1e-3):
        raise ConfigError(f"epsilon {epsilon} outside [1e-8, 1e-3]")
    rng = np.random.default_rng(seed)
    varbs = [parameter(np.asarray(x, dtype=np.float64)) for x in inputs]
    loss = f(varbs)
    backward(loss)
    worst = 0.0
    for v, x in zip(varbs, inputs):
        x = np.asarray(x, dtype=np.float64)
        flat_idx = np.arange(x.size)
        if x.size > max_coords:
            flat_idx = rng.choice(x.size, size=max_coords, replace=False)
        analytic = v.grad.reshape(-1)
        for i in flat_idx:
            xp = x.reshape(-1).copy()
            xp[i] += epsilon
            xm = x.reshape(-1).copy()
            xm[i] -= epsilon
            fp = _eval_at(f, varbs, v, xp.reshape(x.shape))
            fm = _eval_at(f, varbs, v, xm.reshape(x.shape))
            numeric = (fp - fm) / (2 * epsilon)
            denom = max(abs(numeric), abs(analytic[i]), 1.0)
            worst = max(worst, abs(analytic[i] - numeric) / denom)
    return worst


def _eval_at(f, varbs, target, value):
    fresh = []
    for v in varbs:
        fresh.append(Variable(value if v is target else v.value))
    return float(f(fresh).value.reshape(()))
