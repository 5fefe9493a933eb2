"""Patch-wise Wiener deconvolution with known, rotated PSFs."""

from __future__ import annotations

import numpy as np
from scipy import signal

from palsim.isp import IspParams, SensorModel, forward_isp, invert_isp
from palsim.optics import PSFStack
from palsim.simulate import DEFAULT_SECTORS, AnnularImage, FoVPartition, apply_patchwise, check_pitch

DEFAULT_NSR = 1e-3


def kernel_otf(kernel: np.ndarray, shape: tuple) -> np.ndarray:
    """Transfer function of a centred kernel on a grid of ``shape``."""
    k = kernel.shape[0]
    c = k // 2
    buf = np.zeros(shape)
    buf[:k, :k] = kernel
    buf = np.roll(buf, (-c, -c), axis=(0, 1))
    return np.fft.rfft2(buf)


def wiener_patch(patch: np.ndarray, kernel: np.ndarray, nsr: float) -> np.ndarray:
    """Deconvolve one 2-D patch: X = conj(H) Y / (|H|^2 + nsr).

    The patch is edge-replicated by the kernel radius before the transform
    and cropped back afterwards.  With ``nsr == 0`` frequencies where H
    vanishes are set to zero.
    """
    if nsr < 0:
        raise ValueError("nsr must be non-negative")
    r = kernel.shape[0] // 2
    y = np.pad(patch, r, mode="edge") if r else patch
    H = kernel_otf(kernel, y.shape)
    Y = np.fft.rfft2(y)
    den = np.abs(H) ** 2 + nsr
    safe = den > 0
    X = np.where(safe, np.conj(H) * Y / np.where(safe, den, 1.0), 0.0)
    x = np.fft.irfft2(X, s=y.shape)
    return x[r:r + patch.shape[0], r:r + patch.shape[1]] if r else x


def fill_blind(lin: np.ndarray, image: AnnularImage, stack: PSFStack) -> np.ndarray:
    """Copy of ``lin`` whose blind disc holds the blurred image instead of the raw one.

    The blind area passes through the simulation unblurred, so next to it the
    data is not a blurred image and deconvolution rings.  Blurring once more
    with the innermost kernel gives the inner patches a consistent border.
    """
    r, _ = image.polar()
    blind = r < image.r_blind
    if not blind.any():
        return lin
    out = lin.copy()
    ks = stack.per_channel[0]
    h = ks.shape[1] // 2
    for c in range(lin.shape[2]):
        blurred = signal.fftconvolve(np.pad(lin[..., c], h, mode="edge"), ks[c], mode="valid") if h else lin[..., c]
        out[..., c][blind] = blurred[blind]
    return out


def wiener_linear(lin: np.ndarray, image: AnnularImage, stack: PSFStack, part: FoVPartition, nsr: float,
                  n_sectors: int = DEFAULT_SECTORS) -> np.ndarray:
    """Per-patch Wiener on linear RGB; the blind area is returned unchanged."""
    out = apply_patchwise(fill_blind(lin, image, stack), image, stack, part, n_sectors,
                          lambda region, k: wiener_patch(region, k, nsr), inverse=True)
    r, _ = image.polar()
    blind = r < image.r_blind
    out[blind] = lin[blind]
    return out


def wiener_image(img: AnnularImage, stack: PSFStack, part: FoVPartition, nsr: float = DEFAULT_NSR,
                 sensor: SensorModel | None = None, n_sectors: int = DEFAULT_SECTORS) -> AnnularImage:
    """Recover an AC capture: inverse ISP, per-patch Wiener, forward ISP without noise."""
    isp = sensor.isp if sensor is not None else IspParams.identity()
    if sensor is not None:
        check_pitch(stack, sensor)
    lin = invert_isp(img.pixels, isp)
    rec = wiener_linear(lin, img, stack, part, nsr, n_sectors)
    return img.with_pixels(forward_isp(rec, isp, enable_mosaic_noise=False))
