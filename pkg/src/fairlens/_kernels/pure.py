"""Pure-numpy implementations of the hot kernels.

Used when the compiled extension is unavailable or when FAIRLENS_PURE=1.
Both backends implement the same three functions with identical semantics;
accumulation order matches the compiled loops so results agree closely.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "pure"


def pairwise_sq_dists(x: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, symmetric with an exactly-zero diagonal."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    sq = np.einsum("ij,ij->i", x, x)
    d = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    d = 0.5 * (d + d.T)
    np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def tsne_kl_grad(p: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """KL(P||Q) and its exact gradient for the Student-t low-dim kernel.

    Valid for any nonnegative P, including exaggerated ones whose mass S is
    not 1: the gradient of sum p*log(p/q) is 4*sum_j (p_ij - S*q_ij) *
    num_ij * (y_i - y_j). The KL term clamps q at 1e-12 so it stays finite.
    """
    d = pairwise_sq_dists(y)
    num = 1.0 / (1.0 + d)
    np.fill_diagonal(num, 0.0)
    z = num.sum()
    q = num / z
    s = p.sum()
    mask = p > 0.0
    kl = float(np.sum(p[mask] * np.log(p[mask] / np.maximum(q[mask], 1e-12))))
    pq_num = (p - s * q) * num
    grad = 4.0 * (np.diag(pq_num.sum(axis=1)) - pq_num) @ y
    return kl, grad


def convolve_region(region: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable convolution over a float region with clamp-to-edge borders.

    Horizontal pass then vertical pass; region is (h, w, c) float64.
    """
    region = np.ascontiguousarray(region, dtype=np.float64)
    kernel = np.ascontiguousarray(kernel, dtype=np.float64)
    r = (kernel.shape[0] - 1) // 2

    def one_axis(data: np.ndarray, axis: int) -> np.ndarray:
        pad = [(0, 0)] * data.ndim
        pad[axis] = (r, r)
        padded = np.pad(data, pad, mode="edge")
        out = np.zeros_like(data)
        length = data.shape[axis]
        for o in range(kernel.shape[0]):
            sl = [slice(None)] * data.ndim
            sl[axis] = slice(o, o + length)
            out += kernel[o] * padded[tuple(sl)]
        return out

    return one_axis(one_axis(region, 1), 0)
