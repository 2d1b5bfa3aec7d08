#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Times the three hot paths (pairwise squared distances, one t-SNE
gradient+KL evaluation, and the separable region convolution) on
synthetic data and prints a comparison table.

    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --points 2000 --image 512
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from fairlens._kernels import pure

try:
    from fairlens._kernels import _native as native
except ImportError:
    native = None


def timeit(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--points", type=int, default=1000,
                        help="points for pairwise/t-SNE benches")
    parser.add_argument("--dims", type=int, default=128)
    parser.add_argument("--image", type=int, default=256,
                        help="square region size for the convolution bench")
    parser.add_argument("--sigma", type=float, default=4.0)
    parser.add_argument("--tsne-iters", type=int, default=10)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args(argv)

    rng = np.random.RandomState(0)
    x = rng.randn(args.points, args.dims)
    y = rng.randn(args.points, 2)
    p = np.abs(rng.randn(args.points, args.points))
    p = (p + p.T) / 2
    np.fill_diagonal(p, 0.0)
    p /= p.sum()
    region = rng.randint(0, 256, size=(args.image, args.image, 3)).astype(np.float64)
    radius = int(np.ceil(3 * args.sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-offsets**2 / (2 * args.sigma**2))
    kernel /= kernel.sum()

    backends = [("pure", pure)]
    if native is not None:
        backends.append(("native", native))

    cases = [
        (f"pairwise ({args.points}x{args.dims})",
         lambda impl: impl.pairwise_sq_dists(x)),
        (f"tsne grad x{args.tsne_iters} ({args.points} pts)",
         lambda impl: [impl.tsne_kl_grad(p, y) for _ in range(args.tsne_iters)]),
        (f"blur region ({args.image}^2, radius {radius})",
         lambda impl: impl.convolve_region(region, kernel)),
    ]

    width = max(len(name) for name, _ in cases) + 2
    header = f"{'kernel':<{width}}" + "".join(f"{name:>12}" for name, _ in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for case_name, runner in cases:
        times = [timeit(lambda impl=impl: runner(impl), args.repeats)
                 for _, impl in backends]
        row = f"{case_name:<{width}}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>9.2f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
