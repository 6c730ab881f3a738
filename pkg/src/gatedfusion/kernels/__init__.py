"""Hot numeric kernels with a compiled core and a pure-Python fallback.

Every dot product is accumulated exactly (Shewchuk summation, the same
algorithm as ``math.fsum``) and rounded once, so results are independent
of summation order and bitwise identical across both backends.  This is
what makes row permutations of the attention input permute the output
bitwise, and makes repeated runs byte-identical.

Set ``GATEDFUSION_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("GATEDFUSION_PURE_PYTHON"):
    try:
        from . import _cykernels

        _impl = _cykernels
        BACKEND = "cython"
    except ImportError:
        pass


def matmul(a, b):
    """Exact-dot-product matrix multiply of two 2-d arrays (f32 or f64)."""
    return _impl.matmul(a, b)


def exact_row_sums(x):
    """Exactly rounded sum of each row of a 2-d array."""
    return _impl.exact_row_sums(x)
