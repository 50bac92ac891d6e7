"""Compare the compiled and numpy temporal-convolution kernels.

    python benchmarks/bench_kernels.py [--repeat 20]

Shapes follow training at desk scale: batch 16, T = 6, d = 40 input
channels, and either the shared first attention conv (12 * 20 outputs) or
the grouped per-branch second conv (12 groups of 20 -> 1).
"""

import argparse
import timeit

import numpy as np

from gstam._kernels import BACKEND, backends

SHAPES = {
    # name: (x shape (N, G, C_in, T), weight shape (G, C_out, C_in, k))
    "conv1 batch16": ((16, 1, 40, 6), (1, 240, 40, 3)),
    "conv2 batch16": ((16, 12, 20, 6), (12, 1, 20, 3)),
    "conv1 infer512": ((512, 1, 40, 6), (1, 240, 40, 3)),
    "single k1": ((1, 1, 3, 6), (1, 5, 3, 1)),
}


def bench(impl, x, w, b, g, repeat):
    fwd = min(timeit.repeat(lambda: impl.conv1d_forward(x, w, b), number=10, repeat=repeat)) / 10
    bwd = min(timeit.repeat(lambda: impl.conv1d_backward(x, w, g), number=10, repeat=repeat)) / 10
    return fwd, bwd


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    impls = backends()
    print(f"default backend: {BACKEND}; available: {', '.join(impls)}")
    rng = np.random.default_rng(0)
    print(f"{'shape':<16} {'backend':<8} {'forward us':>11} {'backward us':>12} {'speedup':>8}")
    for name, (xs, ws) in SHAPES.items():
        x, w = rng.normal(size=xs), rng.normal(size=ws)
        b = rng.normal(size=ws[:2])
        g = rng.normal(size=(xs[0], ws[0], ws[1], xs[3]))
        timings = {k: bench(impl, x, w, b, g, args.repeat) for k, impl in impls.items()}
        base = sum(timings["python"])
        for k, (f, bw) in timings.items():
            print(f"{name:<16} {k:<8} {f * 1e6:>11.1f} {bw * 1e6:>12.1f} {base / (f + bw):>7.2f}x")


if __name__ == "__main__":
    main()
