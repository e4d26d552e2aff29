"""Two-reference fusion metrics: SSIM, PSNR, CC and Nabf, plus corpus reports.

Pinned conventions, all on [0, 1] single-channel images:

* SSIM: Gaussian window 11x11, sigma 1.5 (normalised to sum 1), valid
  region only, ``C1 = (0.01 L)^2``, ``C2 = (0.03 L)^2`` with ``L = 1``.
  The fusion score is ``ssim(F, IR) + ssim(F, VIS)`` (range [-2, 2]).
* PSNR: ``10 log10(L^2 / MSE)`` with ``L = 1``, capped at 100 dB; the fusion
  score is the mean over the two references.
* CC: Pearson correlation over flattened pixels, mean over the two
  references; NaN when an image has zero variance.
* Nabf: Petrovic edge-preservation model with Shreyamsha Kumar's modified
  artifact term, evaluated on the 0-255 scale with Sobel/8 kernels,
  reflective border, ``Td = 2``, ``Lg = 1.5``, ``Nrg = 0.9999``, ``kg = 19``,
  ``sigma_g = 0.5``, ``Nra = 0.9995``, ``ka = 22``, ``sigma_a = 0.5``.
  Returns 0 when no source pixel carries edge weight.
"""

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError, SizeError

log = logging.getLogger(__name__)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03
PEAK = 1.0
PSNR_CAP = 100.0

NABF_TD = 2.0
NABF_LG = 1.5
NABF_NRG, NABF_KG, NABF_SIGMA_G = 0.9999, 19.0, 0.5
NABF_NRA, NABF_KA, NABF_SIGMA_A = 0.9995, 22.0, 0.5

METRIC_NAMES = ("ssim", "psnr", "cc", "nabf")


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    """1-D normalised Gaussian taps; the 2-D window is their outer product."""
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img, taps):
    rows = sliding_window_view(img, len(taps), axis=0) @ taps
    return sliding_window_view(rows, len(taps), axis=1) @ taps


def _as_gray_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or a.shape != b.shape:
        raise ShapeError(f"metrics need aligned single-channel images, got {a.shape} and {b.shape}")
    return a, b


def ssim_map(x, y):
    x, y = _as_gray_pair(x, y)
    if min(x.shape) < SSIM_WINDOW:
        raise SizeError(f"image {x.shape} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    taps = gaussian_window()
    c1 = (SSIM_K1 * PEAK) ** 2
    c2 = (SSIM_K2 * PEAK) ** 2
    mx, my = _filter_valid(x, taps), _filter_valid(y, taps)
    sxx = _filter_valid(x * x, taps) - mx * mx
    syy = _filter_valid(y * y, taps) - my * my
    sxy = _filter_valid(x * y, taps) - mx * my
    return ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2))


def ssim_pair(fused, ref):
    return float(ssim_map(fused, ref).mean())


def ssim_fusion(fused, ir, vis):
    return ssim_pair(fused, ir) + ssim_pair(fused, vis)


def psnr_pair(fused, ref):
    fused, ref = _as_gray_pair(fused, ref)
    mse = float(np.mean((fused - ref) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(PEAK * PEAK / mse))


def psnr_fusion(fused, ir, vis):
    return 0.5 * (psnr_pair(fused, ir) + psnr_pair(fused, vis))


def cc_pair(fused, ref):
    """Pearson correlation, or NaN when either image is constant."""
    fused, ref = _as_gray_pair(fused, ref)
    a = fused.ravel() - fused.mean()
    b = ref.ravel() - ref.mean()
    den = math.sqrt(float(a @ a) * float(b @ b))
    if den == 0.0:
        return math.nan
    return float(a @ b) / den


def cc_fusion(fused, ir, vis):
    return 0.5 * (cc_pair(fused, ir) + cc_pair(fused, vis))


_SOBEL_V = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]) / 8.0
_SOBEL_H = _SOBEL_V.T.copy()


def _edge_strength_orientation(img):
    padded = np.pad(img, 1, mode="reflect")
    win = sliding_window_view(padded, (3, 3))
    # true convolution: flip the kernels
    gv = np.einsum("ijab,ab->ij", win, _SOBEL_V[::-1, ::-1])
    gh = np.einsum("ijab,ab->ij", win, _SOBEL_H[::-1, ::-1])
    g = np.sqrt(gh * gh + gv * gv)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where((gv == 0) & (gh == 0), 0.0, np.arctan(gv / gh))
    return g, a


def _preservation(g_src, a_src, g_f, a_f):
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(g_src > g_f, g_f / g_src, g_src / g_f)
    ratio = np.where((g_src == 0) | (g_f == 0), 0.0, ratio)
    orient = np.abs(np.abs(a_src - a_f) - np.pi / 2) * 2 / np.pi
    qg = NABF_NRG / (1 + np.exp(-NABF_KG * (ratio - NABF_SIGMA_G)))
    qa = NABF_NRA / (1 + np.exp(-NABF_KA * (orient - NABF_SIGMA_A)))
    return np.sqrt(qg * qa)


def nabf(fused, ir, vis):
    """Fraction of edge weight attributable to artifacts the fusion added."""
    fused, ir = _as_gray_pair(fused, ir)
    _, vis = _as_gray_pair(fused, vis)
    g_a, a_a = _edge_strength_orientation(ir * 255.0)
    g_b, a_b = _edge_strength_orientation(vis * 255.0)
    g_f, a_f = _edge_strength_orientation(fused * 255.0)
    q_af = _preservation(g_a, a_a, g_f, a_f)
    q_bf = _preservation(g_b, a_b, g_f, a_f)
    w_a = np.where(g_a >= NABF_TD, g_a ** NABF_LG, 0.0)
    w_b = np.where(g_b >= NABF_TD, g_b ** NABF_LG, 0.0)
    w_sum = float(np.sum(w_a + w_b))
    if w_sum == 0.0:
        return 0.0
    artifact = (g_f > g_a) & (g_f > g_b)
    return float(np.sum(np.where(artifact, (1 - q_af) * w_a + (1 - q_bf) * w_b, 0.0)) / w_sum)


@dataclass
class PairMetrics:
    name: str
    ssim: float
    psnr: float
    cc: float
    nabf: float
    flags: tuple = ()


def evaluate_pair(name, fused, ir, vis):
    cc = cc_fusion(fused, ir, vis)
    flags = ("cc_undefined",) if math.isnan(cc) else ()
    if flags:
        log.warning("%s: zero-variance image, CC undefined", name)
    return PairMetrics(name, ssim_fusion(fused, ir, vis), psnr_fusion(fused, ir, vis), cc,
                       nabf(fused, ir, vis), flags)


def mean_std(values):
    """Two-pass population mean and standard deviation over finite values."""
    vals = [v for v in values if math.isfinite(v)]
    if not vals:
        return math.nan, math.nan
    mean = sum(vals) / len(vals)
    var = sum((v - mean) ** 2 for v in vals) / len(vals)
    return mean, math.sqrt(var)


@dataclass
class MetricReport:
    records: list = field(default_factory=list)

    @property
    def aggregates(self):
        return {m: mean_std([getattr(r, m) for r in self.records]) for m in METRIC_NAMES}

    @property
    def flagged(self):
        return [r.name for r in self.records if r.flags]


def evaluate_corpus(triples):
    """``triples`` yields ``(name, fused, ir, vis)``; records keep name order."""
    return MetricReport(sorted((evaluate_pair(*t) for t in triples), key=lambda r: r.name))


def fmt(value):
    return f"{value:.6g}"


def write_report(report, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("pair",) + METRIC_NAMES)
        for r in report.records:
            writer.writerow([r.name] + [fmt(getattr(r, m)) for m in METRIC_NAMES])
        agg = report.aggregates
        writer.writerow(["mean±std"] + [f"{fmt(agg[m][0])}±{fmt(agg[m][1])}" for m in METRIC_NAMES])


def read_report(path):
    """Return ``(rows, summary)`` parsed back from :func:`write_report` output."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    summary = None
    if rows and rows[-1]["pair"] == "mean±std":
        last = rows.pop()
        summary = {m: tuple(float(p) for p in last[m].split("±")) for m in METRIC_NAMES}
    parsed = [{"pair": r["pair"], **{m: float(r[m]) for m in METRIC_NAMES}} for r in rows]
    return parsed, summary
