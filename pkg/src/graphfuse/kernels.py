"""Kernel dispatch: compiled extension when importable, numpy otherwise.

Set ``GRAPHFUSE_PURE_PYTHON=1`` before import to force the numpy path.
``BACKEND`` names the active implementation; ``backends()`` exposes both
(where available) for cross-checking and benchmarking.
"""

import os

import numpy as np

from . import _pykernels
from .errors import GraphError

try:
    if os.environ.get("GRAPHFUSE_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python kernels requested")
    from . import _ckernels
except ImportError:
    _ckernels = None

_impl = _ckernels if _ckernels is not None else _pykernels
BACKEND = "cython" if _ckernels is not None else "numpy"


def backends():
    """Map of backend name to kernel module, compiled first when present."""
    found = {}
    if _ckernels is not None:
        found["cython"] = _ckernels
    found["numpy"] = _pykernels
    return found


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def dilated_knn_indices(x, k, d, impl=None):
    impl = impl or _impl
    return impl.dilated_knn(_f64(x), int(k), int(d))


def max_relative(xp, nbrs, impl=None):
    """Return ``(out, arg)``; ``arg[i, c]`` is the neighbour that won the max."""
    if nbrs.shape[1] == 0:
        raise GraphError("vertex with an empty neighbour list")
    impl = impl or _impl
    out, arg = impl.max_relative(_f64(xp), np.ascontiguousarray(nbrs, dtype=np.int64))
    return out.astype(xp.dtype, copy=False), arg


def max_relative_backward(dout, arg, impl=None):
    impl = impl or _impl
    dx = impl.max_relative_backward(_f64(dout), np.ascontiguousarray(arg, dtype=np.int64))
    return dx.astype(dout.dtype, copy=False)
