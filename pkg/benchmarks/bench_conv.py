"""Compare the compiled and pure-numpy convolution kernels.

Run: python benchmarks/bench_conv.py
"""

import time

import numpy as np

from codedlens.kernels import _conv_py

try:
    from codedlens.kernels import _conv_cy
except ImportError:
    _conv_cy = None

CASES = [
    # (batch, cin, cout, extent, kernel, stride)
    (8, 8, 8, 32, 3, 1),
    (8, 16, 32, 16, 3, 2),
    (8, 64, 64, 8, 3, 1),
    (1, 1, 8, 128, 3, 1),
]


def _time(fn, *args, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    backends = [("python", _conv_py)]
    if _conv_cy is not None:
        backends.append(("cython", _conv_cy))
    else:
        print("compiled extension not available; benchmarking fallback only")
    rng = np.random.default_rng(0)
    header = f"{'case':<28}" + "".join(f"{name:>12}" for name, _ in backends)
    print(header)
    print("-" * len(header))
    for n, ci, co, ext, k, stride in CASES:
        x = rng.standard_normal((n, ci, ext, ext))
        w = rng.standard_normal((co, ci, k, k))
        label = f"N{n} {ci}->{co} {ext}x{ext} s{stride}"
        times = []
        ref = None
        for name, mod in backends:
            y = mod.conv2d_forward(x, w, stride)
            if ref is None:
                ref = y
            else:
                assert np.allclose(y, ref, atol=1e-10), f"{name} disagrees"
            gy = rng.standard_normal(y.shape)
            t = (_time(mod.conv2d_forward, x, w, stride)
                 + _time(mod.conv2d_input_grad, gy, w, stride, ext, ext)
                 + _time(mod.conv2d_weight_grad, x, gy, stride, k, k))
            times.append(t)
        print(f"{label:<28}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times))


if __name__ == "__main__":
    main()
