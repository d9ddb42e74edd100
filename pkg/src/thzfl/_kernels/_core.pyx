# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled single-pass versions of the link hot kernels.

Must stay bit-identical to ``_fallback.py``; see the build flags in
setup.py (FMA contraction is disabled for that reason).
"""

import numpy as np

from libc.math cimport fabs, floor, copysign

IMPLEMENTATION = "compiled"


def quantize_blocks(double[:, ::1] x, double[::1] scale,
                    double[::1] inv_scale, double[:, ::1] u):
    cdef Py_ssize_t m = x.shape[0]
    cdef Py_ssize_t n = x.shape[1]
    out_arr = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double s, inv, q
    for i in range(m):
        s = scale[i]
        inv = inv_scale[i]
        for j in range(n):
            q = floor(fabs(x[i, j]) * s + u[i, j])
            out[i, j] = copysign(q, x[i, j]) * inv
    return out_arr


def apply_channel_blocks(double[:, ::1] x, double[::1] gain,
                         double[::1] noise_std, double[:, ::1] z):
    cdef Py_ssize_t m = x.shape[0]
    cdef Py_ssize_t n = x.shape[1]
    out_arr = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double g, ns, a, b
    for i in range(m):
        g = gain[i]
        ns = noise_std[i]
        for j in range(n):
            a = g * x[i, j]
            b = ns * z[i, j]
            out[i, j] = a + b
    return out_arr
