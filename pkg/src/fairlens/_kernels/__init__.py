"""Hot-kernel backend selection.

The compiled Cython extension is preferred; the pure-numpy module is the
fallback and can be forced with FAIRLENS_PURE=1 (useful for benchmarking
and for environments without a compiler).
"""

from __future__ import annotations

import os

from . import pure

if os.environ.get("FAIRLENS_PURE") == "1":
    _impl = pure
else:
    try:
        from . import _native as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = pure

BACKEND_NAME: str = _impl.BACKEND_NAME
# benchmarks/bench_kernels.py: BLAS-backed pairwise distances beat the
# compiled loops, so that kernel always routes through the numpy path;
# the extension carries the t-SNE gradient and the blur convolution.
pairwise_sq_dists = pure.pairwise_sq_dists
tsne_kl_grad = _impl.tsne_kl_grad
convolve_region = _impl.convolve_region


def available_backends():
    names = ["pure"]
    try:
        from . import _native  # noqa: F401
        names.append("native")
    except ImportError:
        pass
    return names
