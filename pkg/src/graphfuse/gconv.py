"""Max-relative graph convolution, dynamic graph convolution and the GCB.

Parameters are plain dicts of numpy arrays. A graph-conv dict holds
``w_agg`` (D x D), ``w_update`` (2D x D_out) and ``b_update``; a GCB dict adds
``fc_in_*``, ``fc_out_*``, ``ffn1_*`` and ``ffn2_*`` weight/bias pairs.

Backward passes treat the KNN edge set chosen in the forward pass as
constant, and route the max-relative gradient to the winning neighbour
(first index on ties).
"""

import math

import numpy as np
from scipy.special import erf

from . import kernels
from .errors import NumericError, ShapeError
from .graph import EdgeSet, dilated_knn

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

GCONV_KEYS = ("w_agg", "w_update", "b_update")
GCB_KEYS = ("fc_in_w", "fc_in_b", *GCONV_KEYS, "fc_out_w", "fc_out_b",
            "ffn1_w", "ffn1_b", "ffn2_w", "ffn2_b")


def gelu(t):
    """Exact GeLU, ``t * Phi(t)``."""
    return 0.5 * t * (1.0 + erf(t / _SQRT2))


def gelu_grad(t):
    return 0.5 * (1.0 + erf(t / _SQRT2)) + t * _INV_SQRT_2PI * np.exp(-0.5 * t * t)


def glorot(rng, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_graph_conv(rng, dim_in, dim_out=None):
    dim_out = dim_in if dim_out is None else dim_out
    return {
        "w_agg": glorot(rng, dim_in, dim_in),
        "w_update": glorot(rng, 2 * dim_in, dim_out),
        "b_update": np.zeros(dim_out),
    }


def init_gcb(rng, dim, ffn_ratio=4, zero_branches=False):
    hidden = ffn_ratio * dim
    p = {
        "fc_in_w": glorot(rng, dim, dim),
        "fc_in_b": np.zeros(dim),
        **init_graph_conv(rng, dim),
        "fc_out_w": glorot(rng, dim, dim),
        "fc_out_b": np.zeros(dim),
        "ffn1_w": glorot(rng, dim, hidden),
        "ffn1_b": np.zeros(hidden),
        "ffn2_w": glorot(rng, hidden, dim),
        "ffn2_b": np.zeros(dim),
    }
    if zero_branches:
        for key in ("fc_out_w", "fc_out_b", "ffn2_w", "ffn2_b"):
            p[key] = np.zeros_like(p[key])
    return p


def max_relative_aggregate(x, edges):
    """Row ``i`` is the elementwise max of ``x[j] - x[i]`` over neighbours ``j``."""
    nbrs = edges.neighbors if isinstance(edges, EdgeSet) else np.asarray(edges)
    if nbrs.shape[0] != x.shape[0]:
        raise ShapeError(f"edge set covers {nbrs.shape[0]} vertices, features have {x.shape[0]}")
    return kernels.max_relative(x, nbrs)[0]


def _check_dims(x, w, name):
    if x.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"{name}: features {x.shape} do not match weights {w.shape}")


def graph_conv_forward(x, edges, p):
    _check_dims(x, p["w_agg"], "graph_conv")
    nbrs = edges.neighbors if isinstance(edges, EdgeSet) else np.asarray(edges)
    if nbrs.shape[0] != x.shape[0]:
        raise ShapeError(f"edge set covers {nbrs.shape[0]} vertices, features have {x.shape[0]}")
    xp = x @ p["w_agg"]
    agg, arg = kernels.max_relative(xp, nbrs)
    cat = np.concatenate([xp, agg], axis=1)
    out = cat @ p["w_update"] + p["b_update"]
    return out, (x, xp, cat, arg)


def graph_conv(x, edges, p):
    """``[x W_agg || maxrel(x W_agg)] W_update + b``."""
    return graph_conv_forward(x, edges, p)[0]


def graph_conv_backward(dout, cache, p):
    x, xp, cat, arg = cache
    dim = xp.shape[1]
    grads = {"w_update": cat.T @ dout, "b_update": dout.sum(axis=0)}
    dcat = dout @ p["w_update"].T
    dxp = dcat[:, :dim] + kernels.max_relative_backward(np.ascontiguousarray(dcat[:, dim:]), arg)
    grads["w_agg"] = x.T @ dxp
    return dxp @ p["w_agg"].T, grads


def dyn_gc(x, k, d, p):
    """Rebuild the dilated KNN graph from ``x`` itself, then graph-convolve."""
    return graph_conv(x, dilated_knn(x, k, d), p)


def gcb_forward_cached(x, p, k, d, ffn_residual=True, edges=None):
    """GCB forward returning ``(out, cache)``.

    ``edges`` overrides the KNN rebuild, which freezes the graph for
    finite-difference checks.
    """
    _check_dims(x, p["fc_in_w"], "gcb")
    a = x @ p["fc_in_w"] + p["fc_in_b"]
    if edges is None:
        edges = dilated_knn(a, k, d)
    g, gc_cache = graph_conv_forward(a, edges, p)
    c = g @ p["fc_out_w"] + p["fc_out_b"]
    x1 = gelu(c) + x
    f1 = x1 @ p["ffn1_w"] + p["ffn1_b"]
    h1 = gelu(f1)
    out = h1 @ p["ffn2_w"] + p["ffn2_b"]
    if ffn_residual:
        out = out + x1
    return out, (x, a, edges, gc_cache, g, c, x1, f1, h1)


def gcb_backward_cached(dout, cache, p, ffn_residual=True):
    x, a, _, gc_cache, g, c, x1, f1, h1 = cache
    grads = {"ffn2_w": h1.T @ dout, "ffn2_b": dout.sum(axis=0)}
    df1 = (dout @ p["ffn2_w"].T) * gelu_grad(f1)
    grads["ffn1_w"] = x1.T @ df1
    grads["ffn1_b"] = df1.sum(axis=0)
    dx1 = df1 @ p["ffn1_w"].T
    if ffn_residual:
        dx1 = dx1 + dout
    dc = dx1 * gelu_grad(c)
    grads["fc_out_w"] = g.T @ dc
    grads["fc_out_b"] = dc.sum(axis=0)
    dg = dc @ p["fc_out_w"].T
    da, gc_grads = graph_conv_backward(dg, gc_cache, p)
    grads.update(gc_grads)
    grads["fc_in_w"] = x.T @ da
    grads["fc_in_b"] = da.sum(axis=0)
    dx = da @ p["fc_in_w"].T + dx1
    return dx, grads


def gcb_forward(x, p, k, d, ffn_residual=True, edges=None):
    """One graph convolution block.

    ``x1 = GeLU(fc_out(DynGC(fc_in(x)))) + x`` then
    ``out = ffn2(GeLU(ffn1(x1))) + x1`` (drop the last ``+ x1`` with
    ``ffn_residual=False``).
    """
    return gcb_forward_cached(x, p, k, d, ffn_residual, edges)[0]


def gcb_backward(x, p, k, d, upstream, ffn_residual=True, edges=None):
    """Return ``(dx, param_grads)`` for a scalar loss with gradient ``upstream``."""
    upstream = np.asarray(upstream)
    if not np.isfinite(upstream).all():
        raise NumericError("upstream gradient contains NaN or Inf")
    _, cache = gcb_forward_cached(x, p, k, d, ffn_residual, edges)
    return gcb_backward_cached(upstream, cache, p, ffn_residual=ffn_residual)
