"""Image I/O, colour conversion, cropping, patch (un)flattening and Sobel.

Images are float64 numpy arrays in [0, 1], shaped ``(H, W)`` for grayscale
and ``(H, W, 3)`` for RGB. Vertex features are ``(N, D)`` arrays.
"""

from pathlib import Path
from typing import NamedTuple

import numpy as np
from PIL import Image as PILImage

from .errors import DecodeError, FormatError, ShapeError, SizeError

# full-range BT.601 luma weights
KR, KG, KB = 0.299, 0.587, 0.114

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()

_EIGHT_BIT = {"L": 255.0, "RGB": 255.0}
_SIXTEEN_BIT = {"I;16": 65535.0, "I;16B": 65535.0, "I;16L": 65535.0}


class YCbCr(NamedTuple):
    y: np.ndarray
    cb: np.ndarray
    cr: np.ndarray


def load_image(path):
    """Read a PNG/BMP raster and scale intensities to [0, 1].

    8-bit gray and RGB are divided by 255, 16-bit gray by 65535. Palette
    images are expanded to RGB; other modes raise :class:`FormatError`.
    """
    try:
        with PILImage.open(path) as im:
            im.load()
            mode = im.mode
            if mode == "P":
                im = im.convert("RGB")
                mode = "RGB"
            if mode in _EIGHT_BIT:
                scale = _EIGHT_BIT[mode]
            elif mode in _SIXTEEN_BIT:
                scale = _SIXTEEN_BIT[mode]
            else:
                raise FormatError(f"{path}: unsupported image mode {mode!r}")
            data = np.asarray(im, dtype=np.float64)
    except (FormatError, FileNotFoundError):
        raise
    except (OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"{path}: cannot decode image ({exc})") from exc
    return data / scale


def save_image(img, path):
    """Write an image as 8-bit PNG (values clipped to [0, 1] and rounded)."""
    arr = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    data = np.rint(arr * 255.0).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    PILImage.fromarray(data, mode="RGB" if data.ndim == 3 else "L").save(path, format="PNG")


def to_gray(img):
    """Return the luminance plane for RGB input; grayscale passes through."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    return rgb_to_ycbcr(img).y


def rgb_to_ycbcr(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"expected an RGB image of shape (H, W, 3), got {img.shape}")
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    y = KR * r + KG * g + KB * b
    cb = 0.5 + (b - y) / (2.0 * (1.0 - KB))
    cr = 0.5 + (r - y) / (2.0 * (1.0 - KR))
    return YCbCr(y, cb, cr)


def ycbcr_to_rgb(ycc, clip=True):
    y, cb, cr = (np.asarray(p, dtype=np.float64) for p in ycc)
    if not (y.shape == cb.shape == cr.shape):
        raise ShapeError(f"plane shapes differ: {y.shape}, {cb.shape}, {cr.shape}")
    r = y + 2.0 * (1.0 - KR) * (cr - 0.5)
    b = y + 2.0 * (1.0 - KB) * (cb - 0.5)
    g = (y - KR * r - KB * b) / KG
    rgb = np.stack([r, g, b], axis=-1)
    return np.clip(rgb, 0.0, 1.0) if clip else rgb


def crop_count(dim, size, stride):
    return (dim - size) // stride + 1


def crop_offsets(h, w, size, stride):
    """Top-left corners of every ``size``x``size`` window, in raster order."""
    if size > min(h, w):
        raise SizeError(f"crop size {size} exceeds image {h}x{w}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    ys = range(0, h - size + 1, stride)
    xs = range(0, w - size + 1, stride)
    return [(y, x) for y in ys for x in xs]


def crop_pairs(ir, vis, size, stride):
    ir = np.asarray(ir)
    vis = np.asarray(vis)
    if ir.shape[:2] != vis.shape[:2]:
        raise ShapeError(f"pair is not aligned: {ir.shape[:2]} vs {vis.shape[:2]}")
    h, w = ir.shape[:2]
    return [
        (ir[y:y + size, x:x + size], vis[y:y + size, x:x + size])
        for y, x in crop_offsets(h, w, size, stride)
    ]


def padded_shape(h, w, patch):
    return -(-h // patch) * patch, -(-w // patch) * patch


def patchify(img, patch):
    """Flatten non-overlapping ``patch``x``patch`` blocks into vertex rows.

    Rows follow raster order of the patch grid; each row is the row-major
    flattening of its block. Sizes that do not divide evenly are padded by
    edge replication on the bottom/right.
    """
    img = np.asarray(img)
    if img.ndim != 2:
        raise ShapeError(f"patchify expects a single-channel image, got {img.shape}")
    h, w = img.shape
    ph, pw = padded_shape(h, w, patch)
    if (ph, pw) != (h, w):
        img = np.pad(img, ((0, ph - h), (0, pw - w)), mode="edge")
    gh, gw = ph // patch, pw // patch
    blocks = img.reshape(gh, patch, gw, patch).transpose(0, 2, 1, 3)
    return blocks.reshape(gh * gw, patch * patch)


def unpatchify(vf, h, w, patch):
    vf = np.asarray(vf)
    ph, pw = padded_shape(h, w, patch)
    gh, gw = ph // patch, pw // patch
    if vf.shape != (gh * gw, patch * patch):
        raise ShapeError(
            f"vertex features {vf.shape} inconsistent with {h}x{w} image, patch {patch}"
        )
    img = vf.reshape(gh, gw, patch, patch).transpose(0, 2, 1, 3).reshape(ph, pw)
    return img[:h, :w]


def unpatchify_adjoint(dimg, patch):
    """Gradient of :func:`unpatchify` with respect to the vertex features.

    Pixels of the replication pad were cropped away, so they receive zero.
    """
    h, w = dimg.shape
    ph, pw = padded_shape(h, w, patch)
    full = np.zeros((ph, pw), dtype=dimg.dtype)
    full[:h, :w] = dimg
    return patchify(full, patch)


def _smooth_diff(padded, h, w):
    """``(gx, gy)`` as central difference then [1, 2, 1] smoothing.

    Differencing first makes constant regions exactly zero.
    """
    dx = padded[:, 2:] - padded[:, :-2]
    dy = padded[2:, :] - padded[:-2, :]
    gx = dx[0:h] + 2.0 * dx[1:h + 1] + dx[2:h + 2]
    gy = dy[:, 0:w] + 2.0 * dy[:, 1:w + 1] + dy[:, 2:w + 2]
    return gx, gy


def _smooth_diff_adjoint(dgx, dgy):
    h, w = dgx.shape
    dpad = np.zeros((h + 2, w + 2), dtype=dgx.dtype)
    ddx = np.zeros((h + 2, w), dtype=dgx.dtype)
    ddx[0:h] += dgx
    ddx[1:h + 1] += 2.0 * dgx
    ddx[2:h + 2] += dgx
    dpad[:, 2:] += ddx
    dpad[:, :-2] -= ddx
    ddy = np.zeros((h, w + 2), dtype=dgy.dtype)
    ddy[:, 0:w] += dgy
    ddy[:, 1:w + 1] += 2.0 * dgy
    ddy[:, 2:w + 2] += dgy
    dpad[2:, :] += ddy
    dpad[:-2, :] -= ddy
    # fold the replicated border back onto the edge pixels it copied
    dpad[1, :] += dpad[0, :]
    dpad[-2, :] += dpad[-1, :]
    dpad = dpad[1:-1]
    dpad[:, 1] += dpad[:, 0]
    dpad[:, -2] += dpad[:, -1]
    return dpad[:, 1:-1]


def sobel_components(img):
    """Return ``(gx, gy)``, the correlations with ``SOBEL_X`` and ``SOBEL_Y``
    under edge-replicate padding."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise ShapeError(f"sobel expects a single-channel image, got {img.shape}")
    h, w = img.shape
    return _smooth_diff(np.pad(img, 1, mode="edge"), h, w)


def sobel_gradient(img):
    """Gradient magnitude ``|Gx| + |Gy|``."""
    gx, gy = sobel_components(img)
    return np.abs(gx) + np.abs(gy)


def sobel_gradient_backward(img, dgrad):
    """Vector-Jacobian product of :func:`sobel_gradient`; sign(0) is taken as 0."""
    gx, gy = sobel_components(img)
    return _smooth_diff_adjoint(np.sign(gx) * dgrad, np.sign(gy) * dgrad)
