"""Toy-scale learnable-PSF encoder-decoder for lensless reconstruction.

Encoder levels compress spatially (gated residual blocks + strided conv),
estimate a per-level PSF from channel statistics (mask simulator), and relay
features through a differentiable frequency-domain Wiener restoration.
Decoder levels upsample, zero-pad, concatenate with skips, and fuse.
Training uses Adam on a composite loss (MSE + 0.2*(1-SSIM) + 0.2*perceptual
proxy). Everything is double precision and deterministic given seeds.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from codedlens import autodiff as ad
from codedlens import metrics
from codedlens.errors import ConfigError, SizingError


@dataclass
class NetworkConfig:
    scales: int = 4
    base_channels: int = 8
    input_extents: tuple = (32, 32)
    cms_reduction: int = 2
    wiener_delta_init: float = 1.0
    loss_weights: tuple = (1.0, 0.2, 0.2)
    seed: int = 0
    use_recb: bool = True
    fixed_psf: np.ndarray | None = None   # frozen mask bank (ablation)

    def __post_init__(self):
        if self.scales < 2:
            raise ConfigError("scales must be >= 2")
        if self.base_channels < 2:
            raise ConfigError("base_channels must be >= 2")
        if self.cms_reduction != 2:
            raise ConfigError("cms_reduction is fixed at 2")
        h, w = self.input_extents
        div = 2 ** self.scales
        if h % div or w % div:
            raise ConfigError(f"input extents {h}x{w} must be divisible by {div}")
        if (h & (h - 1)) or (w & (w - 1)):
            raise ConfigError(f"input extents {h}x{w} must be powers of two")
        for s in range(self.scales + 1):
            if self.width(s) % 2:
                raise ConfigError(f"channel width {self.width(s)} at level {s} is odd")

    def width(self, level):
        return self.base_channels * (2 ** level)

    def extent(self, level):
        h, w = self.input_extents
        return (h // 2 ** level, w // 2 ** level)

    def to_dict(self):
        d = {"scales": self.scales, "base_channels": self.base_channels,
             "input_extents": list(self.input_extents),
             "cms_reduction": self.cms_reduction,
             "wiener_delta_init": self.wiener_delta_init,
             "loss_weights": list(self.loss_weights), "seed": self.seed,
             "use_recb": self.use_recb,
             "fixed_psf": None if self.fixed_psf is None else np.asarray(self.fixed_psf).tolist()}
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["input_extents"] = tuple(d["input_extents"])
        d["loss_weights"] = tuple(d["loss_weights"])
        if d.get("fixed_psf") is not None:
            d["fixed_psf"] = np.asarray(d["fixed_psf"], dtype=np.float64)
        return cls(**d)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 8
    epochs: int = 10
    augment: bool = False
    seed: int = 0
    # global-norm gradient clip; an outlier batch can otherwise saturate the
    # output sigmoid for every pixel at once, which is a zero-gradient state
    # training cannot leave. None disables.
    grad_clip: float | None = 1.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError("grad_clip must be > 0 (or None)")


class Parameters:
    """Flat registry of named learnable tensors (insertion-ordered)."""

    def __init__(self):
        self._store = {}

    def register(self, name, value):
        if name in self._store:
            raise ConfigError(f"parameter {name!r} registered twice")
        self._store[name] = ad.parameter(np.asarray(value, dtype=np.float64))
        return self._store[name]

    def __getitem__(self, name):
        return self._store[name]

    def __contains__(self, name):
        return name in self._store

    def names(self):
        return list(self._store)

    def items(self):
        return self._store.items()

    def zero_grads(self):
        for v in self._store.values():
            v.zero_grad()


def count_parameters(params):
    return sum(int(v.value.size) for _, v in params.items())


# ---------------------------------------------------------------------------
# parameter construction


def _fanin_init(rng, shape, fan_in):
    # variance-preserving; the network has no normalization layers, so
    # He-style gain compounds across scales and saturates the output sigmoid
    return rng.standard_normal(shape) / math.sqrt(fan_in)


def build_parameters(config):
    rng = np.random.default_rng(config.seed)
    p = Parameters()
    c0 = config.base_channels
    p.register("stem.w", _fanin_init(rng, (c0, 1, 3, 3), 9))
    p.register("stem.b", np.zeros((1, c0, 1, 1)))
    for s in range(config.scales):
        cs, cn = config.width(s), config.width(s + 1)
        pre = f"scale{s}"
        p.register(f"{pre}.proj.w", _fanin_init(rng, (cs, cs), cs))
        if config.use_recb:
            _register_recb(p, rng, f"{pre}.recb", cs)
        p.register(f"{pre}.down.w", _fanin_init(rng, (cn, cs, 3, 3), cs * 9))
        p.register(f"{pre}.down.b", np.zeros((1, cn, 1, 1)))
        cprime = cn // 2
        if config.fixed_psf is None:
            p.register(f"{pre}.cms.W", rng.standard_normal((cprime, cn)) / math.sqrt(cn))
            p.register(f"{pre}.cms.b", np.zeros((1, cprime, 1, 1)))
            eh, ew = config.extent(s + 1)
            p.register(f"{pre}.cms.M", 0.01 * rng.standard_normal((1, cprime, eh, ew)))
        p.register(f"{pre}.wnfb.proj.w", _fanin_init(rng, (cn, cprime), cprime))
        p.register(f"{pre}.log_delta",
                   np.full((1, 1, 1, 1), math.log(config.wiener_delta_init)))
    cb = config.width(config.scales)
    if config.use_recb:
        _register_recb(p, rng, "bottleneck.recb", cb)
    else:
        # keep a plain conv so the no-ReCB ablation still has a bottleneck
        p.register("bottleneck.w", _fanin_init(rng, (cb, cb, 3, 3), cb * 9))
        p.register("bottleneck.b", np.zeros((1, cb, 1, 1)))
    for s in reversed(range(config.scales)):
        cs, cn = config.width(s), config.width(s + 1)
        p.register(f"dec{s}.sam.w", _fanin_init(rng, (cs, cs + cn, 3, 3), (cs + cn) * 9))
        p.register(f"dec{s}.sam.b", np.zeros((1, cs, 1, 1)))
    p.register("out.w", 0.02 * _fanin_init(rng, (1, c0, 3, 3), c0 * 9))  # near-zero logits at init
    # dark-background prior: start the output sigmoid near a dim constant
    # instead of 0.5, so the early background gradient cannot race every
    # logit into saturation before structure is learned
    p.register("out.b", np.full((1, 1, 1, 1), -1.5))
    return p


def _register_recb(p, rng, pre, c):
    p.register(f"{pre}.w1", _fanin_init(rng, (c, c, 3, 3), c * 9))
    p.register(f"{pre}.b1", np.zeros((1, c, 1, 1)))
    p.register(f"{pre}.w2", _fanin_init(rng, (c, c, 3, 3), c * 9))
    p.register(f"{pre}.b2", np.zeros((1, c, 1, 1)))
    p.register(f"{pre}.gw", np.zeros((c, c)))
    p.register(f"{pre}.gb", np.zeros((1, c, 1, 1)))


# ---------------------------------------------------------------------------
# blocks


def recb_forward(x, params, pre):
    """Gated residual block: y = x + sigmoid(gate(x)) * conv(relu(conv(x)))."""
    t = ad.conv2d_zero_same(x, params[f"{pre}.w1"]) + params[f"{pre}.b1"]
    t = ad.conv2d_zero_same(ad.relu(t), params[f"{pre}.w2"]) + params[f"{pre}.b2"]
    gate = ad.sigmoid(ad.pointwise_conv(x, params[f"{pre}.gw"]) + params[f"{pre}.gb"])
    return x + gate * t


def scm_forward(x, params, pre, config):
    """Spatial compression: projected gated block, then strided downsampling."""
    h, w = x.value.shape[-2:]
    if h % 2 or w % 2:
        raise SizingError(f"extents {h}x{w} must be even to downsample")
    skip = ad.pointwise_conv(x, params[f"{pre}.proj.w"])
    if config.use_recb:
        skip = recb_forward(skip, params, f"{pre}.recb")
    down = ad.conv2d_zero_same(skip, params[f"{pre}.down.w"], stride=2)
    down = down + params[f"{pre}.down.b"]
    return down, skip


def cms_forward(x, params, pre, config):
    """Mask simulator: channel attention gates scaling a normalized mask bank.

    Returns (gates, psf_estimate); the estimate has C/2 nonnegative spatial
    maps per item, each summing to its gate weight.
    """
    n, c, h, w = x.value.shape
    if c % 2:
        raise ConfigError(f"mask simulator needs an even channel count, got {c}")
    cprime = c // 2
    if config.fixed_psf is not None:
        bank = _resample_psf(config.fixed_psf, (h, w))
        gates = ad.constant(np.ones((n, cprime, 1, 1)))
        return gates, ad.constant(np.broadcast_to(bank, (n, cprime, h, w)).copy())
    z = ad.global_avg_pool(x)
    gates = ad.sigmoid(ad.pointwise_conv(z, params[f"{pre}.cms.W"])
                       + params[f"{pre}.cms.b"])
    m = params[f"{pre}.cms.M"]
    e = ad.exp(m - float(np.max(m.value)))
    norm = e * ad.reciprocal(ad.spatial_sum(e))
    return gates, norm * gates


def _resample_psf(kernel, extents):
    """Average-pool a PSF kernel to the given extents, renormalized to sum 1."""
    k = np.asarray(kernel, dtype=np.float64)
    h, w = extents
    kh, kw = k.shape
    if kh % h or kw % w:
        raise SizingError(f"PSF {kh}x{kw} is not an integer multiple of {h}x{w}")
    fh, fw = kh // h, kw // w
    pooled = k.reshape(h, fh, w, fw).sum(axis=(1, 3))
    return pooled / pooled.sum()


def wnfb_forward(features, psf_estimate, log_delta, params, pre):
    """Frequency-domain Wiener restoration of features, residual-combined."""
    h, w = features.value.shape[-2:]
    if (h & (h - 1)) or (w & (w - 1)):
        raise SizingError(f"extents {h}x{w} must be powers of two")
    psf = ad.pointwise_conv(psf_estimate, params[f"{pre}.wnfb.proj.w"])
    f = ad.fft2(features)
    p = ad.fft2(psf)
    delta = ad.exp(log_delta)
    denom = ad.magnitude_sq(p) + delta
    transfer = ad.complex_scale(ad.complex_conj(p), ad.reciprocal(denom))
    restored = ad.real_part(ad.ifft2(ad.complex_mul(transfer, f)))
    return features + restored


def sam_forward(deep, skip, params, pre):
    """Spatial amplification: upsample, center-pad, concatenate, fuse."""
    up = ad.bilinear_upsample(deep, 2)
    th, tw = skip.value.shape[-2:]
    padded = ad.zero_pad_spatial(up, (th, tw))
    cat = ad.concat_channels([padded, skip])
    return ad.conv2d_zero_same(cat, params[f"{pre}.sam.w"]) + params[f"{pre}.sam.b"]


def lensnet_forward(measurement, params, config):
    """Full forward pass: batch of planes -> reconstructed planes in [0,1]."""
    v = _as_nchw(measurement)
    if v.value.shape[-2:] != tuple(config.input_extents):
        raise ConfigError(f"input extents {v.value.shape[-2:]} do not match config "
                          f"{tuple(config.input_extents)}")
    h = ad.conv2d_zero_same(v, params["stem.w"]) + params["stem.b"]
    skips = []
    for s in range(config.scales):
        pre = f"scale{s}"
        h, skip = scm_forward(h, params, pre, config)
        skips.append(skip)
        _, psf_estimate = cms_forward(h, params, pre, config)
        h = wnfb_forward(h, psf_estimate, params[f"{pre}.log_delta"], params, pre)
    if config.use_recb:
        h = recb_forward(h, params, "bottleneck.recb")
    else:
        h = ad.conv2d_zero_same(h, params["bottleneck.w"]) + params["bottleneck.b"]
    for s in reversed(range(config.scales)):
        h = sam_forward(h, skips[s], params, f"dec{s}")
    out = ad.conv2d_zero_same(h, params["out.w"]) + params["out.b"]
    return ad.sigmoid(out)


def _as_nchw(measurement):
    if isinstance(measurement, ad.Variable):
        v = measurement
        if v.value.ndim != 4:
            raise ConfigError("Variable input must be 4-D (N,C,H,W)")
        return v
    x = np.asarray(measurement, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim == 3:
        x = x[:, None]
    return ad.constant(x)


# ---------------------------------------------------------------------------
# composite loss


def _gaussian_blur_valid(x, win_var, margin):
    blurred = ad.conv2d_zero_same(x, win_var)
    n, c, h, w = blurred.value.shape
    return ad.crop(blurred, margin, margin, h - 2 * margin, w - 2 * margin)


def ssim_index(pred, target, value_range=1.0):
    """Differentiable mean SSIM (11x11 Gaussian window, valid region)."""
    win = metrics.gaussian_window()[None, None]
    wv = ad.constant(win)
    margin = win.shape[-1] // 2
    c1 = (0.01 * value_range) ** 2
    c2 = (0.03 * value_range) ** 2
    mu_a = _gaussian_blur_valid(pred, wv, margin)
    mu_b = _gaussian_blur_valid(target, wv, margin)
    ea = _gaussian_blur_valid(pred * pred, wv, margin)
    eb = _gaussian_blur_valid(target * target, wv, margin)
    eab = _gaussian_blur_valid(pred * target, wv, margin)
    var_a = ea - mu_a * mu_a
    var_b = eb - mu_b * mu_b
    cov = eab - mu_a * mu_b
    num = (ad.scalar_mul(mu_a * mu_b, 2.0) + c1) * (ad.scalar_mul(cov, 2.0) + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return ad.mean_reduce(num * ad.reciprocal(den))


def perceptual_term(pred, target, seed=0):
    """Differentiable counterpart of metrics.perceptual_proxy."""
    weights = metrics.proxy_weights(seed, in_channels=pred.value.shape[1])
    layers = []
    a, b = pred, target
    for w in weights:
        wv = ad.constant(w)
        a = ad.relu(ad.conv2d_zero_same(a, wv))
        b = ad.relu(ad.conv2d_zero_same(b, wv))
        diff = a - b
        layers.append(ad.mean_reduce(diff * diff))
        a = ad.avg_pool2(a)
        b = ad.avg_pool2(b)
    total = layers[0]
    for term in layers[1:]:
        total = total + term
    return ad.scalar_mul(total, 1.0 / len(layers))


def composite_loss(pred, target, weights=(1.0, 0.2, 0.2), seed=0):
    """MSE + w_ssim*(1 - SSIM) + w_perc*perceptual proxy, as a scalar Variable."""
    target = target if isinstance(target, ad.Variable) else ad.constant(
        np.asarray(target, dtype=np.float64).reshape(pred.value.shape))
    if pred.value.shape != target.value.shape:
        raise SizingError(f"shape mismatch: {pred.value.shape} vs {target.value.shape}")
    w_mse, w_ssim, w_perc = weights
    diff = pred - target
    loss = ad.scalar_mul(ad.mean_reduce(diff * diff), w_mse)
    if w_ssim:
        one_minus = ad.scalar_mul(ssim_index(pred, target), -1.0) + 1.0
        loss = loss + ad.scalar_mul(one_minus, w_ssim)
    if w_perc:
        loss = loss + ad.scalar_mul(perceptual_term(pred, target, seed), w_perc)
    return loss


# ---------------------------------------------------------------------------
# optimizer and training


class AdamState:
    def __init__(self, params):
        self.m = {name: np.zeros_like(v.value) for name, v in params.items()}
        self.v = {name: np.zeros_like(v.value) for name, v in params.items()}
        self.step = 0


def adam_step(params, state, tconfig):
    """One Adam update from the grads currently stored on the parameters."""
    state.step += 1
    t = state.step
    b1, b2 = tconfig.beta1, tconfig.beta2
    for name, var in params.items():
        g = var.grad
        if g is None:
            continue
        state.m[name] = b1 * state.m[name] + (1 - b1) * g
        state.v[name] = b2 * state.v[name] + (1 - b2) * g * g
        mhat = state.m[name] / (1 - b1 ** t)
        vhat = state.v[name] / (1 - b2 ** t)
        var.value = var.value - tconfig.learning_rate * mhat / (np.sqrt(vhat) + tconfig.epsilon)


def _clip_gradients(params, clip):
    """Scale all gradients so their global norm is at most clip."""
    if clip is None:
        return
    total = 0.0
    for _, v in params.items():
        if v.grad is not None:
            total += float(np.sum(v.grad * v.grad))
    norm = math.sqrt(total)
    if norm > clip:
        scale = clip / norm
        for _, v in params.items():
            if v.grad is not None:
                v.grad = v.grad * scale


def _augment_pair(obj, rng, resimulate):
    k = int(rng.integers(4))
    obj = np.rot90(obj, k)
    if rng.integers(2):
        obj = obj[:, ::-1]
    if rng.integers(2):
        obj = obj[::-1, :]
    obj = np.ascontiguousarray(obj)
    return resimulate(obj), obj


def train(dataset, config, tconfig, params=None, val_set=None, resimulate=None,
          log=None):
    """Adam training loop over (measurement, object) pairs.

    resimulate(object) -> measurement regenerates augmented measurements
    through the physical forward model; without it, augmentation is skipped
    (geometric transforms of a raw measurement have no physical meaning).
    Returns (params, history); history has one row per epoch plus a flat
    per-step loss list under the "step_losses" key of the last entry holder.
    """
    if len(dataset) == 0:
        raise ConfigError("empty dataset")
    if params is None:
        params = build_parameters(config)
    state = AdamState(params)
    rng = np.random.default_rng(tconfig.seed)
    history = {"epochs": [], "step_losses": []}
    for epoch in range(tconfig.epochs):
        order = rng.permutation(len(dataset))
        losses = []
        for start in range(0, len(dataset), tconfig.batch_size):
            idx = order[start:start + tconfig.batch_size]
            meas, objs = [], []
            for i in idx:
                m, o = dataset[i]
                if tconfig.augment and resimulate is not None:
                    m, o = _augment_pair(o, rng, resimulate)
                meas.append(m)
                objs.append(o)
            batch = np.stack(meas)[:, None]
            target = np.stack(objs)[:, None]
            params.zero_grads()
            pred = lensnet_forward(batch, params, config)
            loss = composite_loss(pred, target, config.loss_weights, config.seed)
            ad.backward(loss)
            _clip_gradients(params, tconfig.grad_clip)
            adam_step(params, state, tconfig)
            losses.append(float(loss.value.reshape(())))
        history["step_losses"].extend(losses)
        row = {"epoch": epoch + 1, "mean_loss": float(np.mean(losses))}
        if val_set:
            row["val_psnr"] = evaluate_psnr(params, config, val_set)
        history["epochs"].append(row)
        if log:
            log(row)
    return params, history


def evaluate_psnr(params, config, pairs, batch_size=16):
    """Mean PSNR of the network over (measurement, object) pairs."""
    vals = []
    for start in range(0, len(pairs), batch_size):
        chunk = pairs[start:start + batch_size]
        batch = np.stack([m for m, _ in chunk])[:, None]
        pred = lensnet_forward(batch, params, config).value
        for (_, obj), est in zip(chunk, pred):
            vals.append(metrics.psnr(est[0], obj, 1.0))
    return float(np.mean(vals))


def predict(params, config, measurement):
    """Reconstruct a single plane."""
    out = lensnet_forward(np.asarray(measurement)[None, None], params, config)
    return out.value[0, 0]


# ---------------------------------------------------------------------------
# complexity counters and checkpoints


def count_flops(config):
    """Forward FLOPs for one input plane (2 FLOPs per multiply-accumulate)."""
    total = 0

    def conv(cin, cout, k, h, w):
        return 2 * cin * cout * k * k * h * w

    h, w = config.input_extents
    c0 = config.base_channels
    total += conv(1, c0, 3, h, w)
    for s in range(config.scales):
        cs, cn = config.width(s), config.width(s + 1)
        eh, ew = config.extent(s)
        nh, nw = config.extent(s + 1)
        total += conv(cs, cs, 1, eh, ew)                       # projection
        if config.use_recb:
            total += 2 * conv(cs, cs, 3, eh, ew) + conv(cs, cs, 1, eh, ew)
        total += conv(cs, cn, 3, nh, nw)                       # strided down
        cprime = cn // 2
        if config.fixed_psf is None:
            total += 2 * cn * cprime                           # attention matmul
        total += conv(cprime, cn, 1, nh, nw)                   # wnfb projection
        # two forward FFTs, one inverse, and the transfer product per level
        total += 3 * int(5 * cn * nh * nw * math.log2(nh * nw))
        total += 8 * cn * nh * nw
    cb = config.width(config.scales)
    bh, bw = config.extent(config.scales)
    if config.use_recb:
        total += 2 * conv(cb, cb, 3, bh, bw) + conv(cb, cb, 1, bh, bw)
    else:
        total += conv(cb, cb, 3, bh, bw)
    for s in reversed(range(config.scales)):
        cs, cn = config.width(s), config.width(s + 1)
        eh, ew = config.extent(s)
        total += conv(cs + cn, cs, 3, eh, ew)
    total += conv(c0, 1, 3, h, w)
    return total


def save_checkpoint(path, params, config, step=0, extra=None):
    """JSON header line then raw little-endian float64 payloads in order."""
    header = {"format": "codedlens-checkpoint-v1",
              "config": config.to_dict(), "step": step,
              "shapes": {name: list(v.value.shape) for name, v in params.items()}}
    if extra:
        header["extra"] = extra
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        for _, v in params.items():
            fh.write(np.ascontiguousarray(v.value, dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format") != "codedlens-checkpoint-v1":
            raise ConfigError(f"not a checkpoint file: {path}")
        config = NetworkConfig.from_dict(header["config"])
        params = Parameters()
        for name, shape in header["shapes"].items():
            n = int(np.prod(shape))
            buf = fh.read(n * 8)
            if len(buf) != n * 8:
                raise ConfigError(f"truncated checkpoint payload for {name!r}")
            params.register(name, np.frombuffer(buf, dtype="<f8").reshape(shape).copy())
    return params, config, header
