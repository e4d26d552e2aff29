"""Adam, exponential learning-rate decay, the mini-batch training loop and
versioned checkpoints."""

import csv
import json
import logging
import math
import os
import struct
import tempfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import CheckpointError, NumericError, ShapeError
from .losses import DEFAULT_LAMBDA, LossBreakdown, total_loss_grad
from .net import NetworkConfig, expected_shapes, fuse_backward, fuse_forward, init_params

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"GFCKPT\x00\x01"
CHECKPOINT_VERSION = 1
HISTORY_COLUMNS = ("step", "epoch", "lr", "l_ir", "l_vi", "total")


@dataclass
class TrainConfig:
    lr0: float = 1e-4
    decay: float = 0.95
    batch: int = 4
    epochs: int = 5
    max_steps: int = 0
    lam: float = DEFAULT_LAMBDA
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    crop_size: int = 64
    crop_stride: int = 20
    clip_norm: float = 0.0
    dtype: str = "float64"

    def __post_init__(self):
        if not self.lr0 > 0:
            raise ValueError(f"lr0 must be positive, got {self.lr0}")
        if not 0 < self.decay <= 1:
            raise ValueError(f"decay must lie in (0, 1], got {self.decay}")
        if self.batch < 1:
            raise ValueError(f"batch must be >= 1, got {self.batch}")
        if self.dtype not in ("float64", "float32"):
            raise ValueError(f"dtype must be float64 or float32, got {self.dtype}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


@dataclass
class OptimizerState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()}, 0)


def lr_at(epoch, cfg):
    return cfg.lr0 * cfg.decay ** epoch


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns new ``(params, state)``."""
    for key, g in grads.items():
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for {key!r}")
    t = state.t + 1
    new_params, new_m, new_v = {}, {}, {}
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for key, p in params.items():
        g = grads[key]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {key!r} has shape {g.shape}, parameter {p.shape}")
        m = beta1 * state.m[key] + (1.0 - beta1) * g
        v = beta2 * state.v[key] + (1.0 - beta2) * g * g
        new_params[key] = (p - lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype, copy=False)
        new_m[key] = m
        new_v[key] = v
    return new_params, OptimizerState(new_m, new_v, t)


def clip_global_norm(grads, max_norm):
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm <= 0 or total <= max_norm:
        return grads
    scale = max_norm / total
    return {k: g * scale for k, g in grads.items()}


def batch_grad(batch, params, net_cfg, lam):
    """Mean loss breakdown and mean gradient over ``(ir, vis)`` items."""
    grads = None
    l_ir = l_vi = 0.0
    for ir, vis in batch:
        fused, cache = fuse_forward(ir, vis, params, net_cfg)
        lb, dfused = total_loss_grad(fused, ir, vis, lam)
        g = fuse_backward(dfused, cache, params, net_cfg)
        if grads is None:
            grads = g
        else:
            for k in grads:
                grads[k] = grads[k] + g[k]
        l_ir += lb.l_ir
        l_vi += lb.l_vi
    n = len(batch)
    grads = {k: g / n for k, g in grads.items()}
    return LossBreakdown.of(l_ir / n, l_vi / n, lam), grads


def epoch_order(n_items, seed, epoch):
    return np.random.default_rng([seed, epoch]).permutation(n_items)


@dataclass
class TrainResult:
    params: dict
    state: OptimizerState
    history: list
    step: int


def train(dataset, net_cfg, train_cfg, out_dir=None, params=None, state=None, start_step=0,
          on_step=None):
    """Mini-batch Adam over ``dataset`` (a list of aligned ``(ir, vis)`` crops).

    Each epoch reshuffles with a generator seeded by ``(seed, epoch)``, so a
    run resumed from ``start_step`` with the saved optimizer state replays
    the same batches as an unbroken run. Runs exactly ``max_steps`` steps
    when that is non-zero, otherwise ``epochs`` full epochs. With
    ``out_dir`` a checkpoint is written after every epoch and at the end.
    """
    if not dataset:
        raise ValueError("training dataset is empty")
    dtype = np.dtype(train_cfg.dtype)
    data = [(np.asarray(ir, dtype=dtype), np.asarray(vis, dtype=dtype)) for ir, vis in dataset]
    if params is None:
        params = init_params(net_cfg, seed=train_cfg.seed, dtype=dtype)
    if state is None:
        state = OptimizerState.zeros_like(params)
    per_epoch = math.ceil(len(data) / train_cfg.batch)
    total_steps = train_cfg.max_steps or per_epoch * train_cfg.epochs
    history = []
    step = start_step
    out_dir = Path(out_dir) if out_dir is not None else None
    while step < total_steps:
        epoch, pos = divmod(step, per_epoch)
        order = epoch_order(len(data), train_cfg.seed, epoch)
        lr = lr_at(epoch, train_cfg)
        idx = order[pos * train_cfg.batch:(pos + 1) * train_cfg.batch]
        batch = [data[i] for i in idx]
        try:
            lb, grads = batch_grad(batch, params, net_cfg, train_cfg.lam)
            if not math.isfinite(lb.total):
                raise NumericError("loss became non-finite")
        except NumericError as exc:
            dump = _dump_batch(batch, idx, out_dir)
            raise NumericError(f"step {step} (batch {list(idx)}): {exc}; "
                               f"batch saved to {dump}") from exc
        if train_cfg.clip_norm > 0:
            grads = clip_global_norm(grads, train_cfg.clip_norm)
        params, state = adam_step(params, grads, state, lr, train_cfg.beta1,
                                  train_cfg.beta2, train_cfg.eps)
        history.append({"step": step, "epoch": epoch, "lr": lr, "l_ir": lb.l_ir,
                        "l_vi": lb.l_vi, "total": lb.total})
        if on_step is not None:
            on_step(history[-1])
        step += 1
        if out_dir is not None and (step % per_epoch == 0 or step == total_steps):
            save_checkpoint(out_dir / "checkpoint.gfc", params, net_cfg, state, train_cfg, step)
    return TrainResult(params, state, history, step)


def _dump_batch(batch, idx, out_dir):
    if out_dir is None:
        return "<not saved: no output directory>"
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "nan_batch.npz"
    arrays = {}
    for i, (ir, vis) in zip(idx, batch):
        arrays[f"ir_{i}"] = ir
        arrays[f"vis_{i}"] = vis
    np.savez(path, **arrays)
    return path


def write_history(history, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_COLUMNS)
        for row in history:
            writer.writerow([row["step"], row["epoch"], repr(row["lr"]), repr(row["l_ir"]),
                             repr(row["l_vi"]), repr(row["total"])])


def read_history(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{"step": int(r["step"]), "epoch": int(r["epoch"]),
             **{k: float(r[k]) for k in ("lr", "l_ir", "l_vi", "total")}} for r in rows]


# Checkpoint layout (all integers little-endian):
#   magic (8 bytes) | u32 version | u64 header length | JSON header | tensor data
# The header lists every tensor as [name, shape, byte offset]; tensors are
# raw '<f8' in header order. JSON is written with sorted keys so that
# save -> load -> save is byte-stable.

@dataclass
class Checkpoint:
    params: dict
    net_cfg: NetworkConfig
    state: OptimizerState | None
    train_cfg: TrainConfig | None
    step: int


def _atomic_write(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(path, params, net_cfg, state=None, train_cfg=None, step=0):
    tensors = [(f"param/{k}", params[k]) for k in sorted(params)]
    if state is not None:
        tensors += [(f"adam_m/{k}", state.m[k]) for k in sorted(state.m)]
        tensors += [(f"adam_v/{k}", state.v[k]) for k in sorted(state.v)]
    entries, blobs, offset = [], [], 0
    for name, arr in tensors:
        blob = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append([name, list(arr.shape), offset])
        blobs.append(blob)
        offset += len(blob)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "network": net_cfg.to_dict(),
        "train": train_cfg.to_dict() if train_cfg is not None else None,
        "adam_t": state.t if state is not None else None,
        "step": int(step),
        "tensors": entries,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    payload = (CHECKPOINT_MAGIC + struct.pack("<IQ", CHECKPOINT_VERSION, len(head))
               + head + b"".join(blobs))
    _atomic_write(path, payload)
    log.debug("checkpoint written to %s (step %d)", path, step)


def load_checkpoint(path, net_cfg=None):
    """Read a checkpoint; with ``net_cfg`` also verify every tensor shape."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint ({exc})") from exc
    fixed = len(CHECKPOINT_MAGIC) + 12
    if len(raw) < fixed or raw[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, head_len = struct.unpack("<IQ", raw[len(CHECKPOINT_MAGIC):fixed])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: format version {version}, expected {CHECKPOINT_VERSION}")
    try:
        header = json.loads(raw[fixed:fixed + head_len])
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    if header.get("format_version") != version:
        raise CheckpointError(f"{path}: header/format version mismatch")
    body = raw[fixed + head_len:]
    arrays = {}
    for name, shape, offset in header["tensors"]:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(body):
            raise CheckpointError(f"{path}: truncated tensor {name!r}")
        arrays[name] = np.frombuffer(body, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
    stored_cfg = NetworkConfig.from_dict(header["network"])
    params = {k[len("param/"):]: v for k, v in arrays.items() if k.startswith("param/")}
    _check_shapes(params, expected_shapes(stored_cfg), path)
    if net_cfg is not None:
        _check_shapes(params, expected_shapes(net_cfg), path)
    state = None
    if header.get("adam_t") is not None:
        state = OptimizerState(
            {k[len("adam_m/"):]: v for k, v in arrays.items() if k.startswith("adam_m/")},
            {k[len("adam_v/"):]: v for k, v in arrays.items() if k.startswith("adam_v/")},
            int(header["adam_t"]))
    train_cfg = TrainConfig.from_dict(header["train"]) if header.get("train") else None
    return Checkpoint(params, stored_cfg, state, train_cfg, int(header.get("step", 0)))


def _check_shapes(params, shapes, path):
    if set(params) != set(shapes):
        missing = sorted(set(shapes) - set(params))
        extra = sorted(set(params) - set(shapes))
        raise ShapeError(f"{path}: parameter set mismatch (missing {missing[:3]}, extra {extra[:3]})")
    for k, shape in shapes.items():
        if tuple(params[k].shape) != tuple(shape):
            raise ShapeError(f"{path}: {k!r} has shape {params[k].shape}, expected {shape}")
