"""Synthetic test scenes: textured annular images, checkerboards, slanted edges."""

from __future__ import annotations

import numpy as np
from scipy import special

from palsim.rng import keyed_normal
from palsim.simulate import AnnularImage


def pink_noise(shape: tuple, seed: int, exponent: float = 1.0) -> np.ndarray:
    """Zero-mean, unit-std noise with a 1/f^exponent amplitude spectrum."""
    h, w = shape
    white = keyed_normal(seed, *np.indices((h, w)))
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.rfftfreq(w)[None, :]
    f = np.hypot(fy, fx)
    f[0, 0] = 1.0
    spec = np.fft.rfft2(white) / f**exponent
    spec[0, 0] = 0.0
    out = np.fft.irfft2(spec, s=(h, w))
    return out / out.std()


def annular_scene(size: int = 512, seed: int = 0, blind_ratio: float = 0.19, smooth: float = 1.0) -> AnnularImage:
    """Textured RGB scene inside an annulus, black outside and in the blind area."""
    base = pink_noise((size, size), seed, 1.0 + smooth * 0.5)
    rgb = np.stack([base + 0.35 * pink_noise((size, size), seed + 1 + c, 1.0 + smooth * 0.5)
                    for c in range(3)], axis=-1)
    rgb = 0.5 + 0.15 * rgb
    img = AnnularImage.centered(np.clip(rgb, 0.02, 0.98), blind_ratio=blind_ratio)
    img.pixels = img.pixels * img.annulus_mask()[..., None]
    return img


def checkerboard(size: int, square: int, angle_deg: float = 0.0, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Binary checkerboard (H, W) rotated about the image centre."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) - (size - 1) / 2.0
    a = np.deg2rad(angle_deg)
    u = np.cos(a) * xx + np.sin(a) * yy
    v = -np.sin(a) * xx + np.cos(a) * yy
    cells = (np.floor(u / square) + np.floor(v / square)) % 2
    return np.where(cells > 0, hi, lo)


def slanted_edge(shape: tuple = (64, 64), angle_deg: float = 5.0, sigma: float = 0.0,
                 lo: float = 0.2, hi: float = 0.8) -> np.ndarray:
    """Near-vertical edge (dark left, bright right) tilted by ``angle_deg``.

    Pixels are point-sampled; ``sigma`` > 0 applies an exact Gaussian blur.
    """
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    a = np.deg2rad(angle_deg)
    d = (xx - (w - 1) / 2.0) * np.cos(a) - (yy - (h - 1) / 2.0) * np.sin(a)
    if sigma > 0:
        step = 0.5 * (1.0 + special.erf(d / (np.sqrt(2.0) * sigma)))
    else:
        step = (d >= 0).astype(np.float64)
    return lo + (hi - lo) * step
