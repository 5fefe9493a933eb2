"""Fidelity metrics, slanted-edge SFR/MTF, OIQE and checkerboard ground truth."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, signal
from skimage.filters import threshold_otsu

log = logging.getLogger(__name__)

LUMA = np.array([0.299, 0.587, 0.114])
PSNR_CAP_DB = 100.0
MIN_SLANT_DEG = 1.0


class MeasurementError(ValueError):
    """The input does not support the requested measurement."""


def luma(img: np.ndarray) -> np.ndarray:
    return img @ LUMA if img.ndim == 3 else img


# -- PSNR / SSIM ---------------------------------------------------------------


def _check_pair(a, b, mask):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if mask is not None and mask.shape != a.shape[:2]:
        raise ValueError("mask must match the image height and width")


def psnr(a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None) -> float:
    """PSNR in dB for data in [0, 1], over ``mask`` pixels (all channels)."""
    _check_pair(a, b, mask)
    err = (np.asarray(a, dtype=np.float64) - b) ** 2
    mse = float(err[mask].mean() if mask is not None else err.mean())
    if mse < 1e-10:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / mse))


def ssim(a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None, sigma: float = 1.5) -> float:
    """Mean SSIM on luma with an 11x11 Gaussian window (sigma 1.5).

    The 5-pixel border, where the window leaves the image, is excluded.
    """
    _check_pair(a, b, mask)
    x, y = luma(np.asarray(a, np.float64)), luma(np.asarray(b, np.float64))
    c1, c2 = 0.01**2, 0.03**2
    f = lambda v: ndimage.gaussian_filter(v, sigma, truncate=3.5, mode="reflect")
    mx, my = f(x), f(y)
    vx = f(x * x) - mx * mx
    vy = f(y * y) - my * my
    cxy = f(x * y) - mx * my
    smap = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx**2 + my**2 + c1) * (vx + vy + c2))
    r = int(3.5 * sigma + 0.5)
    valid = np.zeros(x.shape, bool)
    valid[r:x.shape[0] - r, r:x.shape[1] - r] = True
    if mask is not None:
        valid &= mask
    if not valid.any():
        raise ValueError("no pixels left to evaluate")
    return float(smap[valid].mean())


# -- SFR / MTF -----------------------------------------------------------------


@dataclass
class MtfCurve:
    frequencies: np.ndarray
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.frequencies.shape != self.values.shape or self.frequencies.size < 2:
            raise ValueError("frequencies and values must be equal-length arrays (>= 2 samples)")


def _edge_centroids(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = np.abs(img[:, 2:] - img[:, :-2]) * 0.5
    x = np.arange(1, img.shape[1] - 1, dtype=np.float64)
    s = d.sum(axis=1)
    ok = s > 1e-12
    cent = np.where(ok, (d * x).sum(axis=1) / np.where(ok, s, 1.0), np.nan)
    # second pass with a Hamming window around the first estimate
    w = img.shape[1]
    refined = np.full(img.shape[0], np.nan)
    for i in np.flatnonzero(ok):
        win = 0.54 + 0.46 * np.cos(np.clip((x - cent[i]) / (w / 2.0), -1, 1) * np.pi)
        dw = d[i] * win
        if dw.sum() > 1e-12:
            refined[i] = (dw * x).sum() / dw.sum()
    rows = np.arange(img.shape[0], dtype=np.float64)
    keep = np.isfinite(refined)
    return rows[keep], refined[keep]


def sfr(edge_patch: np.ndarray, oversample: int = 4, min_slant_deg: float = MIN_SLANT_DEG) -> MtfCurve:
    """Slanted-edge MTF of a patch holding one near-vertical edge."""
    img = luma(np.asarray(edge_patch, dtype=np.float64))
    h, w = img.shape
    if h < 8 or w < 8:
        raise MeasurementError("patch too small for SFR")
    grad = np.abs(np.diff(img, axis=1))
    if grad.sum(axis=1).max() < 1e-6 * max(1.0, np.abs(img).max()):
        raise MeasurementError("no detectable edge in patch")
    rows, cols = _edge_centroids(img)
    if len(rows) < h // 2:
        raise MeasurementError("edge not found in enough rows")
    slope, intercept = np.polyfit(rows, cols, 1)
    angle = math.degrees(math.atan(slope))
    if abs(angle) < min_slant_deg:
        raise MeasurementError(f"edge slant {angle:.2f} deg is below {min_slant_deg} deg")

    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dist = (xx - (slope * yy + intercept)) * math.cos(math.atan(slope))
    half = min(w / 2.0, (w - np.abs(slope) * h) / 2.0) - 1.0
    use = np.abs(dist) <= half
    nbins = int(2 * half * oversample)
    idx = np.floor((dist[use] + half) * oversample).astype(int)
    idx = np.clip(idx, 0, nbins - 1)
    counts = np.bincount(idx, minlength=nbins)
    sums = np.bincount(idx, weights=img[use], minlength=nbins)
    filled = counts > 0
    centers = np.arange(nbins)
    esf = np.interp(centers, centers[filled], sums[filled] / counts[filled])

    lsf = np.gradient(esf)
    c = float(np.argmax(np.abs(lsf)))
    span = max(c, nbins - 1 - c) + 1
    win = 0.54 + 0.46 * np.cos(np.pi * (centers - c) / span)
    spec = np.abs(np.fft.rfft(lsf * win))
    if spec[0] <= 0:
        raise MeasurementError("degenerate line spread function")
    freqs = np.fft.rfftfreq(nbins, d=1.0 / oversample)
    mtf = spec / spec[0]
    # undo the transfer of the centred finite difference
    arg = 2.0 * np.pi * freqs / oversample
    corr = np.where(arg > 0, np.sin(arg) / np.where(arg > 0, arg, 1.0), 1.0)
    mtf = mtf / np.maximum(corr, 0.1)
    keep = freqs <= 0.5 + 1e-12
    return MtfCurve(freqs[keep], mtf[keep])


def mtf50(curve: MtfCurve) -> float:
    """Frequency of the first downward crossing of 0.5 (0.5 cycles/px if none)."""
    f, v = curve.frequencies, curve.values
    for i in range(len(v) - 1):
        if v[i] >= 0.5 > v[i + 1]:
            return float(f[i] + (v[i] - 0.5) / (v[i] - v[i + 1]) * (f[i + 1] - f[i]))
    return 0.5


def mtf_area(curve: MtfCurve) -> float:
    """Trapezoidal area under the curve over [0, 0.5] cycles/px."""
    f, v = curve.frequencies, curve.values
    sel = f <= 0.5
    f, v = f[sel], v[sel]
    if f[-1] < 0.5:
        f = np.append(f, 0.5)
        v = np.append(v, v[-1])
    return float(np.trapezoid(v, f))


def oiqe(test_curves, ref_curves) -> tuple[float, float, float]:
    """(OIQE50, OIQEarea, OIQE) from ratios of mean MTF50 and mean MTF area."""
    if not test_curves or not ref_curves:
        raise ValueError("both curve lists must be non-empty")
    t50 = np.mean([mtf50(c) for c in test_curves])
    r50 = np.mean([mtf50(c) for c in ref_curves])
    ta = np.mean([mtf_area(c) for c in test_curves])
    ra = np.mean([mtf_area(c) for c in ref_curves])
    o50, oarea = float(t50 / r50), float(ta / ra)
    return o50, oarea, (o50 + oarea) / 2.0


def reference_curves(kernels, angle_deg: float = 5.0, size: int = 96) -> list:
    """MTF curves measured on slanted edges blurred by reference-system kernels."""
    from palsim.scenes import slanted_edge

    curves = []
    for k in kernels:
        edge = slanted_edge((size, size), angle_deg)
        r = k.shape[0] // 2
        blurred = signal.fftconvolve(np.pad(edge, r, mode="edge"), k, mode="valid")
        curves.append(sfr(blurred))
    return curves


# -- checkerboard ground truth ---------------------------------------------------


def checker_gt(patch: np.ndarray, min_region: int = 8) -> tuple[np.ndarray, bool]:
    """Binary ground truth for a degraded black/white pattern.

    Returns ``(gt, degenerate)``; a degenerate patch (a single region) comes
    back unchanged with ``degenerate=True``.
    """
    img = np.asarray(patch, dtype=np.float64)
    y = luma(img)
    smooth = ndimage.gaussian_filter(y, 1.0, mode="nearest")
    if smooth.max() - smooth.min() < 1e-3:
        log.warning("checker_gt: flat patch, returning input")
        return img, True
    t = threshold_otsu(smooth)
    fg = smooth > t
    out = np.zeros_like(y)
    for cls in (True, False):
        labels, n = ndimage.label(fg == cls)
        for lab in range(1, n + 1):
            region = labels == lab
            white = y[region].mean() > t
            if region.sum() < min_region:
                white = not cls
            out[region] = 1.0 if white else 0.0
    if out.min() == out.max():
        log.warning("checker_gt: single region, returning input")
        return img, True
    return (np.repeat(out[..., None], 3, axis=2) if img.ndim == 3 else out), False
