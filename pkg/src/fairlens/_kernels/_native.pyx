# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementations of the hot kernels."""

import numpy as np

cimport numpy as cnp
from libc.math cimport log

cnp.import_array()

BACKEND_NAME = "native"


def pairwise_sq_dists(object x_in):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n, n), dtype=np.float64)
    cdef Py_ssize_t i, j, k
    cdef double acc, diff
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.0
            for k in range(d):
                diff = x[i, k] - x[j, k]
                acc += diff * diff
            out[i, j] = acc
            out[j, i] = acc
    return out


def tsne_kl_grad(object p_in, object y_in):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] p = np.ascontiguousarray(p_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] y = np.ascontiguousarray(y_in, dtype=np.float64)
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t dims = y.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] num = np.zeros((n, n), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] grad = np.zeros((n, dims), dtype=np.float64)
    cdef Py_ssize_t i, j, k
    cdef double acc, diff, z, q, qc, kl, w, s

    z = 0.0
    s = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            acc = 0.0
            for k in range(dims):
                diff = y[i, k] - y[j, k]
                acc += diff * diff
            acc = 1.0 / (1.0 + acc)
            num[i, j] = acc
            z += acc
            s += p[i, j]

    # gradient of sum p*log(p/q) for arbitrary total mass s of P;
    # the KL sum clamps q at 1e-12 so it stays finite
    kl = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            q = num[i, j] / z
            qc = q if q > 1e-12 else 1e-12
            if p[i, j] > 0.0:
                kl += p[i, j] * log(p[i, j] / qc)
            w = 4.0 * (p[i, j] - s * q) * num[i, j]
            for k in range(dims):
                grad[i, k] += w * (y[i, k] - y[j, k])
    return kl, grad


def convolve_region(object region_in, object kernel_in):
    cdef cnp.ndarray[cnp.float64_t, ndim=3] region = np.ascontiguousarray(region_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] kernel = np.ascontiguousarray(kernel_in, dtype=np.float64)
    cdef Py_ssize_t h = region.shape[0]
    cdef Py_ssize_t w = region.shape[1]
    cdef Py_ssize_t c = region.shape[2]
    cdef Py_ssize_t r = (kernel.shape[0] - 1) // 2
    cdef cnp.ndarray[cnp.float64_t, ndim=3] tmp = np.zeros((h, w, c), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] out = np.zeros((h, w, c), dtype=np.float64)
    cdef Py_ssize_t i, j, ch, o, src
    cdef double acc

    # horizontal pass, clamp to region edge
    for i in range(h):
        for j in range(w):
            for ch in range(c):
                acc = 0.0
                for o in range(2 * r + 1):
                    src = j + o - r
                    if src < 0:
                        src = 0
                    elif src >= w:
                        src = w - 1
                    acc += kernel[o] * region[i, src, ch]
                tmp[i, j, ch] = acc
    # vertical pass
    for i in range(h):
        for j in range(w):
            for ch in range(c):
                acc = 0.0
                for o in range(2 * r + 1):
                    src = i + o - r
                    if src < 0:
                        src = 0
                    elif src >= h:
                        src = h - 1
                    acc += kernel[o] * tmp[src, j, ch]
                out[i, j, ch] = acc
    return out
