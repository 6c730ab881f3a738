# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled exact-summation kernels.

The accumulator reproduces CPython's ``math.fsum`` (Shewchuk partials with
the final half-ulp correction), so results match the pure-Python fallback
bit for bit while running at C speed.
"""

from libc.math cimport fabs

import numpy as np

cimport numpy as cnp

cnp.import_array()

DEF MAX_PARTIALS = 64


cdef inline double _fsum_dot(const double* xs, const double* ys,
                             Py_ssize_t n, Py_ssize_t ystride) except? -1:
    cdef double p[MAX_PARTIALS]
    cdef Py_ssize_t count = 0, i, j, k
    cdef double x, y, hi, lo, yr

    lo = 0.0
    for k in range(n):
        x = xs[k] * ys[k * ystride]
        i = 0
        for j in range(count):
            y = p[j]
            if fabs(x) < fabs(y):
                hi = x
                x = y
                y = hi
            hi = x + y
            yr = hi - x
            lo = y - yr
            if lo != 0.0:
                p[i] = lo
                i += 1
            x = hi
        if i >= MAX_PARTIALS:
            raise OverflowError("fsum partials overflow")
        p[i] = x
        count = i + 1

    if count == 0:
        return 0.0
    count -= 1
    hi = p[count]
    lo = 0.0
    while count > 0:
        x = hi
        count -= 1
        y = p[count]
        hi = x + y
        yr = hi - x
        lo = y - yr
        if lo != 0.0:
            break
    if count > 0 and ((lo < 0.0 and p[count - 1] < 0.0) or
                      (lo > 0.0 and p[count - 1] > 0.0)):
        y = lo * 2.0
        x = hi + y
        yr = x - hi
        if y == yr:
            hi = x
    return hi


def matmul(a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out_dtype = a.dtype
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] a64 = \
        np.ascontiguousarray(a, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] b64 = \
        np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t m = a64.shape[0], k = a64.shape[1], n = b64.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] out = \
        np.empty((m, n), dtype=np.float64)
    cdef Py_ssize_t i, j
    for i in range(m):
        for j in range(n):
            out[i, j] = _fsum_dot(&a64[i, 0], &b64[0, j], k, n)
    return out.astype(out_dtype)


def exact_row_sums(x):
    if x.ndim != 2:
        raise ValueError(f"exact_row_sums expects 2-d input, got shape {x.shape}")
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] x64 = \
        np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t m = x64.shape[0], n = x64.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] ones = \
        np.ones(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] out = \
        np.empty(m, dtype=np.float64)
    cdef Py_ssize_t i
    for i in range(m):
        out[i] = _fsum_dot(&x64[i, 0], &ones[0], n, 0)
    return out.astype(x.dtype)
