"""Dynamic dilated KNN edge sets over vertex features."""

from dataclasses import dataclass

import numpy as np

from . import kernels
from ._pykernels import knn_plan, sq_dist_rows
from .errors import GraphError, NumericError


@dataclass(frozen=True)
class EdgeSet:
    """Neighbour lists: ``neighbors[i]`` are the sources feeding vertex ``i``.

    Lists are ordered by ascending distance with ties broken by ascending
    index. ``dilation`` is the stride actually applied (1 after fallback).
    """

    neighbors: np.ndarray
    dilation: int = 1

    @property
    def n(self):
        return self.neighbors.shape[0]

    @property
    def k_effective(self):
        return self.neighbors.shape[1]

    @property
    def num_edges(self):
        return self.neighbors.size


@dataclass(frozen=True)
class KdSchedule:
    """Per-block ``(k, d)`` pairs for one branch."""

    k: tuple
    d: tuple

    def __post_init__(self):
        if len(self.k) != len(self.d):
            raise ValueError("k and d schedules differ in length")
        if any(b < a for a, b in zip(self.k, self.k[1:])):
            raise ValueError(f"k schedule must be non-decreasing: {self.k}")
        if any(not 3 <= k <= 8 for k in self.k):
            raise ValueError(f"k values must lie in [3, 8]: {self.k}")
        if any(not 1 <= d <= 3 for d in self.d):
            raise ValueError(f"d values must lie in [1, 3]: {self.d}")

    @classmethod
    def progressive(cls, blocks, k_range=(3, 8), d_range=(1, 3)):
        """Spread ``k`` and ``d`` monotonically over ``blocks`` layers.

        Six blocks give k = 3..8 and d = 1,1,2,2,3,3.
        """
        k_lo, k_hi = k_range
        d_lo, d_hi = d_range
        if blocks == 1:
            return cls((k_lo,), (d_lo,))
        ks = tuple(int(round(k_lo + (k_hi - k_lo) * i / (blocks - 1))) for i in range(blocks))
        span = d_hi - d_lo + 1
        ds = tuple(d_lo + (span * i) // blocks for i in range(blocks))
        return cls(ks, ds)

    def pairs(self):
        return list(zip(self.k, self.d))

    def __len__(self):
        return len(self.k)


def pairwise_sq_dist(x):
    """Full ``N x N`` squared Euclidean distance matrix."""
    x = np.asarray(x, dtype=np.float64)
    if not np.isfinite(x).all():
        raise NumericError("vertex features contain NaN or Inf")
    return sq_dist_rows(x, np.arange(x.shape[0]))


def dilated_knn(x, k, d=1, impl=None):
    """Build the dilated KNN edge set of ``x``.

    Every vertex ranks all others by (squared distance, index), takes the
    first ``k*d`` and keeps every ``d``-th one. With fewer than ``k*d``
    candidates it falls back to plain top-``min(k, n-1)``.
    """
    x = np.asarray(x)
    if x.ndim != 2:
        raise GraphError(f"vertex features must be 2-D, got shape {x.shape}")
    n = x.shape[0]
    if n < 2:
        raise GraphError(f"need at least 2 vertices, got {n}")
    if k < 1 or d < 1:
        raise GraphError(f"k and d must be >= 1 (k={k}, d={d})")
    if not np.isfinite(x).all():
        raise NumericError("vertex features contain NaN or Inf")
    _, _, stride = knn_plan(n, k, d)
    return EdgeSet(kernels.dilated_knn_indices(x, k, d, impl=impl), dilation=stride)
