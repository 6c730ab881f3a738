"""Pure-Python reference kernels.

``math.fsum`` gives the correctly rounded sum of its inputs, so every dot
product here is exact-then-rounded-once, matching the compiled kernels
bit for bit.
"""

import math

import numpy as np


def matmul(a, b):
    a = np.ascontiguousarray(a)
    b = np.ascontiguousarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out_dtype = a.dtype
    a64 = a.astype(np.float64)
    b64 = b.astype(np.float64)
    m, k = a64.shape
    n = b64.shape[1]
    out = np.empty((m, n), dtype=np.float64)
    for i in range(m):
        row = a64[i]
        for j in range(n):
            # f32 inputs widened to f64: products are exact, fsum rounds once
            out[i, j] = math.fsum(row * b64[:, j])
    return out.astype(out_dtype)


def exact_row_sums(x):
    x = np.ascontiguousarray(x)
    if x.ndim != 2:
        raise ValueError(f"exact_row_sums expects 2-d input, got shape {x.shape}")
    x64 = x.astype(np.float64)
    out = np.array([math.fsum(x64[i]) for i in range(x.shape[0])], dtype=np.float64)
    return out.astype(x.dtype)
