"""Deterministic synthetic infrared/visible scene pairs for tests and demos."""

import numpy as np
from scipy.ndimage import gaussian_filter


def scene_pair(h, w, seed=0):
    """Aligned ``(ir, vis)`` grayscale images in [0, 1].

    Both share a smooth background. The infrared image adds a few warm
    elliptical targets; the visible image adds stripe texture and a
    rectangular structure with hard edges.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    base = gaussian_filter(rng.random((h, w)), sigma=max(h, w) / 6.0, mode="reflect")
    base = (base - base.min()) / (np.ptp(base) + 1e-12)

    ir = 0.25 + 0.2 * base
    for _ in range(3):
        cy, cx = rng.random(2)
        ry, rx = 0.05 + 0.15 * rng.random(2)
        blob = np.exp(-(((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2))
        ir += 0.5 * blob
    ir += 0.02 * gaussian_filter(rng.standard_normal((h, w)), 0.7)

    freq = 2 + 4 * rng.random()
    angle = np.pi * rng.random()
    stripes = 0.5 + 0.5 * np.sin(2 * np.pi * freq * (np.cos(angle) * xx + np.sin(angle) * yy))
    vis = 0.15 + 0.45 * base + 0.2 * stripes
    y0, x0 = rng.integers(0, max(1, h // 2)), rng.integers(0, max(1, w // 2))
    vis[y0:y0 + h // 3, x0:x0 + w // 3] += 0.25
    vis += 0.02 * gaussian_filter(rng.standard_normal((h, w)), 0.7)
    return np.clip(ir, 0.0, 1.0), np.clip(vis, 0.0, 1.0)


def color_visible(vis, seed=0):
    """Tint a grayscale visible image into an RGB image with varying chroma."""
    rng = np.random.default_rng(seed)
    h, w = vis.shape
    tint = gaussian_filter(rng.random((h, w, 3)), sigma=(max(h, w) / 8.0, max(h, w) / 8.0, 0))
    tint = 0.8 + 0.4 * (tint - tint.mean())
    return np.clip(vis[..., None] * tint, 0.0, 1.0)
