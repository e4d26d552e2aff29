"""Training objective: intensity loss against infrared, intensity + Sobel
gradient loss against visible, combined as ``l_ir + lam * l_vi``."""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .image import sobel_gradient, sobel_gradient_backward

DEFAULT_LAMBDA = 1.5


@dataclass(frozen=True)
class LossBreakdown:
    l_ir: float
    l_vi: float
    lam: float
    total: float

    @classmethod
    def of(cls, l_ir, l_vi, lam):
        return cls(float(l_ir), float(l_vi), float(lam), float(l_ir + lam * l_vi))


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or a.shape != b.shape:
        raise ShapeError(f"loss needs aligned single-channel images, got {a.shape} and {b.shape}")
    return a, b


def loss_ir(fused, ir):
    fused, ir = _check_pair(fused, ir)
    r = fused - ir
    return float(np.sum(r * r) / r.size)


def loss_vi(fused, vis):
    fused, vis = _check_pair(fused, vis)
    r = fused - vis
    rg = sobel_gradient(fused) - sobel_gradient(vis)
    return float((np.sum(r * r) + np.sum(rg * rg)) / r.size)


def total_loss(fused, ir, vis, lam=DEFAULT_LAMBDA):
    return LossBreakdown.of(loss_ir(fused, ir), loss_vi(fused, vis), lam)


def total_loss_grad(fused, ir, vis, lam=DEFAULT_LAMBDA):
    """Return ``(LossBreakdown, dL/dfused)``."""
    fused, ir = _check_pair(fused, ir)
    _, vis = _check_pair(fused, vis)
    hw = fused.size
    r_ir = fused - ir
    r_vi = fused - vis
    rg = sobel_gradient(fused) - sobel_gradient(vis)
    l_ir = np.sum(r_ir * r_ir) / hw
    l_vi = (np.sum(r_vi * r_vi) + np.sum(rg * rg)) / hw
    grad = (2.0 / hw) * (r_ir + lam * r_vi) + (2.0 * lam / hw) * sobel_gradient_backward(fused, rg)
    return LossBreakdown.of(l_ir, l_vi, lam), grad
