"""Cascaded fusion network: two intra-modal GCB branches, channel concat,
an inter-modal GCB branch, and a per-vertex reduction back to pixels.

Parameters live in one flat dict keyed ``"<group>.<name>"``, e.g.
``"embed_ir.w"``, ``"intra_vis.3.ffn1_b"``, ``"inter.0.w_agg"``, ``"rho.b"``.
"""

from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ShapeError
from .gconv import GCB_KEYS, gcb_backward_cached, gcb_forward_cached, glorot, init_gcb
from .graph import KdSchedule
from .image import (padded_shape, patchify, rgb_to_ycbcr, unpatchify, unpatchify_adjoint,
                    ycbcr_to_rgb)

BRANCHES = ("ir", "vis")


@dataclass
class NetworkConfig:
    patch_size: int = 1
    feature_dim: int = 8
    intra_blocks: int = 6
    inter_blocks: int = 6
    k_schedule: tuple = ()
    d_schedule: tuple = ()
    ffn_ratio: int = 4
    ffn_residual: bool = True
    zero_init_branches: bool = True
    fixed_k: int | None = None
    no_dilation: bool = False
    no_inter_modal: bool = False

    def __post_init__(self):
        self.k_schedule = tuple(self.k_schedule)
        self.d_schedule = tuple(self.d_schedule)
        if self.feature_dim < 1 or self.patch_size < 1:
            raise ValueError("feature_dim and patch_size must be positive")
        if self.intra_blocks < 1 or self.inter_blocks < 0:
            raise ValueError("need at least one intra block")
        if self.k_schedule and len(self.k_schedule) != self.intra_blocks:
            raise ValueError("k_schedule length must equal intra_blocks")
        if self.d_schedule and len(self.d_schedule) != self.intra_blocks:
            raise ValueError("d_schedule length must equal intra_blocks")
        self.schedule(self.intra_blocks)

    def schedule(self, blocks):
        """Executed ``(k, d)`` schedule for a branch of ``blocks`` GCBs.

        Ablations override the base schedule: ``fixed_k`` pins every k,
        ``no_dilation`` pins every d to 1.
        """
        base = KdSchedule.progressive(blocks)
        ks = self.k_schedule if self.k_schedule and blocks == self.intra_blocks else base.k
        ds = self.d_schedule if self.d_schedule and blocks == self.intra_blocks else base.d
        if self.fixed_k is not None:
            ks = (int(self.fixed_k),) * blocks
        if self.no_dilation:
            ds = (1,) * blocks
        return KdSchedule(tuple(ks), tuple(ds))

    def executed_schedule(self):
        inter = [] if self.no_inter_modal else self.schedule(self.inter_blocks).pairs()
        return {"intra": self.schedule(self.intra_blocks).pairs(), "inter": inter}

    def to_dict(self):
        d = asdict(self)
        d["k_schedule"] = list(self.k_schedule)
        d["d_schedule"] = list(self.d_schedule)
        return d

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


def auto_patch_size(h, w):
    """Pixel vertices for crops up to 64x64, 4x4 patches beyond."""
    return 1 if max(h, w) <= 64 else 4


def block_keys(group, i):
    return {name: f"{group}.{i}.{name}" for name in GCB_KEYS}


def block_params(params, group, i):
    return {name: params[key] for name, key in block_keys(group, i).items()}


def init_params(cfg, seed=0, dtype=np.float64):
    rng = np.random.default_rng(seed)
    dim, p2 = cfg.feature_dim, cfg.patch_size ** 2
    params = {}
    for branch in BRANCHES:
        params[f"embed_{branch}.w"] = glorot(rng, p2, dim)
        params[f"embed_{branch}.b"] = np.zeros(dim)
    for branch in BRANCHES:
        for i in range(cfg.intra_blocks):
            blk = init_gcb(rng, dim, cfg.ffn_ratio, cfg.zero_init_branches)
            params.update({f"intra_{branch}.{i}.{k}": v for k, v in blk.items()})
    for i in range(cfg.inter_blocks):
        blk = init_gcb(rng, 2 * dim, cfg.ffn_ratio, cfg.zero_init_branches)
        params.update({f"inter.{i}.{k}": v for k, v in blk.items()})
    params["rho.w"] = glorot(rng, 2 * dim, p2)
    params["rho.b"] = np.zeros(p2)
    return {k: v.astype(dtype) for k, v in params.items()}


def expected_shapes(cfg):
    """Parameter shapes implied by ``cfg``; used to validate checkpoints."""
    shapes = {}
    dim, p2 = cfg.feature_dim, cfg.patch_size ** 2
    for branch in BRANCHES:
        shapes[f"embed_{branch}.w"] = (p2, dim)
        shapes[f"embed_{branch}.b"] = (dim,)

    def gcb(group, i, width):
        hidden = cfg.ffn_ratio * width
        s = {"fc_in_w": (width, width), "fc_in_b": (width,), "w_agg": (width, width),
             "w_update": (2 * width, width), "b_update": (width,),
             "fc_out_w": (width, width), "fc_out_b": (width,),
             "ffn1_w": (width, hidden), "ffn1_b": (hidden,),
             "ffn2_w": (hidden, width), "ffn2_b": (width,)}
        shapes.update({f"{group}.{i}.{k}": v for k, v in s.items()})

    for branch in BRANCHES:
        for i in range(cfg.intra_blocks):
            gcb(f"intra_{branch}", i, dim)
    for i in range(cfg.inter_blocks):
        gcb("inter", i, 2 * dim)
    shapes["rho.w"] = (2 * dim, p2)
    shapes["rho.b"] = (p2,)
    return shapes


def _run_blocks(x, params, group, schedule, cfg, edges, caches):
    for i, (k, d) in enumerate(schedule.pairs()):
        key = f"{group}.{i}"
        x, cache = gcb_forward_cached(x, block_params(params, group, i), k, d,
                                      cfg.ffn_residual, edges.get(key) if edges else None)
        caches[key] = cache
    return x


def _back_blocks(dx, params, group, n_blocks, cfg, caches, grads):
    for i in reversed(range(n_blocks)):
        key = f"{group}.{i}"
        dx, g = gcb_backward_cached(dx, caches[key], block_params(params, group, i),
                                    cfg.ffn_residual)
        grads.update({f"{key}.{name}": v for name, v in g.items()})
    return dx


def embed(img, branch, params, cfg):
    return patchify(img, cfg.patch_size) @ params[f"embed_{branch}.w"] + params[f"embed_{branch}.b"]


def intra_forward(x, branch, params, cfg, edges=None):
    """Run one modality's GCB stack over embedded vertex features."""
    caches = {}
    return _run_blocks(x, params, f"intra_{branch}", cfg.schedule(cfg.intra_blocks),
                       cfg, edges, caches)


def concat_intra(ir_feat, vis_feat):
    if ir_feat.shape != vis_feat.shape:
        raise ShapeError(f"cannot concatenate {ir_feat.shape} with {vis_feat.shape}")
    return np.concatenate([ir_feat, vis_feat], axis=1)


def inter_forward(f, params, cfg, h, w, edges=None, clamp=True):
    """Inter-modal stack (skipped under ``no_inter_modal``), reduction, unpatchify."""
    caches = {}
    if not cfg.no_inter_modal:
        f = _run_blocks(f, params, "inter", cfg.schedule(cfg.inter_blocks), cfg, edges, caches)
    out = unpatchify(f @ params["rho.w"] + params["rho.b"], h, w, cfg.patch_size)
    return np.clip(out, 0.0, 1.0) if clamp else out


def fuse_forward(ir, vis, params, cfg, edges=None):
    """Unclamped forward pass returning ``(fused, cache)``.

    ``cache["edges"]`` maps every block key to the edge set it used; pass it
    back as ``edges`` to replay the same graphs.
    """
    ir = np.asarray(ir)
    vis = np.asarray(vis)
    if ir.ndim != 2 or ir.shape != vis.shape:
        raise ShapeError(f"fuse needs aligned single-channel images, got {ir.shape} and {vis.shape}")
    h, w = ir.shape
    caches = {}
    feats = {}
    inputs = {"ir": ir, "vis": vis}
    for branch in BRANCHES:
        x = embed(inputs[branch], branch, params, cfg)
        feats[branch] = _run_blocks(x, params, f"intra_{branch}", cfg.schedule(cfg.intra_blocks),
                                    cfg, edges, caches)
    f = concat_intra(feats["ir"], feats["vis"])
    if not cfg.no_inter_modal:
        f = _run_blocks(f, params, "inter", cfg.schedule(cfg.inter_blocks), cfg, edges, caches)
    fused = unpatchify(f @ params["rho.w"] + params["rho.b"], h, w, cfg.patch_size)
    cache = {"blocks": caches, "inputs": inputs, "top": f, "shape": (h, w),
             "edges": {key: c[2] for key, c in caches.items()}}
    return fused, cache


def fuse_backward(dfused, cache, params, cfg):
    """Gradients of a scalar loss w.r.t. every parameter, given ``dL/dfused``."""
    grads = {}
    caches = cache["blocks"]
    dv = unpatchify_adjoint(dfused, cfg.patch_size)
    grads["rho.w"] = cache["top"].T @ dv
    grads["rho.b"] = dv.sum(axis=0)
    df = dv @ params["rho.w"].T
    if not cfg.no_inter_modal:
        df = _back_blocks(df, params, "inter", cfg.inter_blocks, cfg, caches, grads)
    else:
        for i in range(cfg.inter_blocks):
            for name, key in block_keys("inter", i).items():
                grads[key] = np.zeros_like(params[key])
    dim = cfg.feature_dim
    for j, branch in enumerate(BRANCHES):
        dx = _back_blocks(np.ascontiguousarray(df[:, j * dim:(j + 1) * dim]), params,
                          f"intra_{branch}", cfg.intra_blocks, cfg, caches, grads)
        patches = patchify(cache["inputs"][branch], cfg.patch_size)
        grads[f"embed_{branch}.w"] = patches.T @ dx
        grads[f"embed_{branch}.b"] = dx.sum(axis=0)
    return grads


def fuse(ir, vis_y, params, cfg):
    """Fused luminance in [0, 1] for an aligned single-channel pair."""
    return np.clip(fuse_forward(ir, vis_y, params, cfg)[0], 0.0, 1.0)


def fuse_color(ir, vis_rgb, params, cfg):
    """Fuse infrared with the visible Y plane, then restore visible chroma."""
    ycc = rgb_to_ycbcr(vis_rgb)
    y_f = fuse(ir, ycc.y, params, cfg)
    return ycbcr_to_rgb((y_f, ycc.cb, ycc.cr))


def vertex_count(h, w, cfg):
    ph, pw = padded_shape(h, w, cfg.patch_size)
    return (ph // cfg.patch_size) * (pw // cfg.patch_size)
