"""Vectorised numpy versions of the hot kernels.

Used when the compiled extension is missing or ``GRAPHFUSE_PURE_PYTHON=1``.
Every function here produces bit-identical results to ``_ckernels``: squared
distances accumulate one feature column at a time, left to right, and the
aggregation backward pass scatters in row-major order.
"""

import numpy as np

from .errors import NumericError

# rows of the distance matrix materialised at once
_ROW_BLOCK = 512


def sq_dist_rows(x, rows):
    """Squared Euclidean distances from ``x[rows]`` to every row of ``x``."""
    out = np.zeros((len(rows), x.shape[0]))
    for c in range(x.shape[1]):
        diff = x[rows, c][:, None] - x[None, :, c]
        out += diff * diff
    return out


def knn_plan(n, k, d):
    """Return ``(k_effective, candidates, stride)`` for an ``n``-vertex graph."""
    if n - 1 >= k * d:
        return k, k * d, d
    k_eff = min(k, n - 1)
    return k_eff, k_eff, 1


def dilated_knn(x, k, d):
    n = x.shape[0]
    k_eff, m, stride = knn_plan(n, k, d)
    nbrs = np.empty((n, k_eff), dtype=np.int64)
    for start in range(0, n, _ROW_BLOCK):
        rows = np.arange(start, min(start + _ROW_BLOCK, n))
        dist = sq_dist_rows(x, rows)
        if not np.isfinite(dist).all():
            raise NumericError("non-finite pairwise distance")
        dist[np.arange(len(rows)), rows] = np.inf
        # stable sort keeps equal distances in ascending index order; self sorts last
        order = np.argsort(dist, axis=1, kind="stable")
        nbrs[rows] = order[:, :m:stride]
    return nbrs


def max_relative(xp, nbrs):
    diffs = xp[nbrs] - xp[:, None, :]
    pos = np.argmax(diffs, axis=1)
    out = np.take_along_axis(diffs, pos[:, None, :], axis=1)[:, 0, :]
    arg = np.take_along_axis(nbrs, pos, axis=1)
    return out, arg.astype(np.int64)


def max_relative_backward(dout, arg):
    dx = -dout
    cols = np.broadcast_to(np.arange(dout.shape[1]), dout.shape)
    np.add.at(dx, (arg, cols), dout)
    return dx
