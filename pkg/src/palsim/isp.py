"""Sensor description and the forward / inverse ISP chains.

Forward: mosaic -> noise -> demosaic -> white balance -> CCM -> gamma.
Inverse: gamma decompression -> inverse CCM -> inverse white balance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from palsim.optics import ConfigurationError
from palsim.rng import keyed_normal

PATTERNS = ("RGGB", "BGGR", "GRBG", "GBRG")
_CHANNEL = {"R": 0, "G": 1, "B": 2}


@dataclass(frozen=True)
class IspParams:
    wb_gains: tuple = (1.0, 1.0, 1.0)
    ccm: np.ndarray = field(default_factory=lambda: np.eye(3))
    gamma: float = 2.2
    bayer_pattern: str = "RGGB"
    read_sigma: float = 0.003
    shot_gain: float = 0.001

    def __post_init__(self):
        ccm = np.asarray(self.ccm, dtype=np.float64)
        object.__setattr__(self, "ccm", ccm)
        object.__setattr__(self, "wb_gains", tuple(float(g) for g in self.wb_gains))
        if len(self.wb_gains) != 3 or min(self.wb_gains) <= 0:
            raise ValueError("wb_gains must be three positive numbers")
        if ccm.shape != (3, 3):
            raise ValueError("ccm must be 3x3")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.bayer_pattern not in PATTERNS:
            raise ValueError(f"bayer_pattern must be one of {PATTERNS}")
        if self.read_sigma < 0 or self.shot_gain < 0:
            raise ValueError("noise parameters must be non-negative")

    @classmethod
    def identity(cls, **kw) -> "IspParams":
        kw.setdefault("gamma", 1.0)
        kw.setdefault("read_sigma", 0.0)
        kw.setdefault("shot_gain", 0.0)
        return cls(**kw)


@dataclass(frozen=True)
class SensorModel:
    pixel_size_um: float
    resolution: tuple
    response: np.ndarray
    isp: IspParams = field(default_factory=IspParams)

    def __post_init__(self):
        r = np.atleast_2d(np.asarray(self.response, dtype=np.float64))
        object.__setattr__(self, "response", r)
        if self.pixel_size_um <= 0:
            raise ValueError("pixel_size_um must be positive")
        if r.shape[0] != 3:
            raise ValueError("response must have shape (3, n_lambda)")
        if np.any(r < 0) or not np.allclose(r.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("response rows must be non-negative and sum to 1")


def gaussian_response(lambdas, centers=(600.0, 540.0, 460.0), width=40.0) -> np.ndarray:
    """Row-normalized Gaussian spectral sensitivities for R, G, B."""
    lam = np.asarray(lambdas, dtype=np.float64)
    r = np.exp(-0.5 * ((lam[None, :] - np.asarray(centers)[:, None]) / width) ** 2)
    return r / r.sum(axis=1, keepdims=True)


@dataclass
class BayerImage:
    data: np.ndarray
    pattern: str = "RGGB"


def _check_ccm(p: IspParams):
    if abs(np.linalg.det(p.ccm)) <= 1e-9:
        raise ConfigurationError("colour correction matrix is singular")


def invert_isp(img: np.ndarray, p: IspParams) -> np.ndarray:
    """Display-referred RGB in [0, 1] to linear raw RGB."""
    _check_ccm(p)
    lin = np.clip(img, 0.0, 1.0) ** p.gamma
    lin = lin @ np.linalg.inv(p.ccm).T
    lin = lin / np.asarray(p.wb_gains)
    return np.maximum(lin, 0.0)


def _channel_map(pattern: str) -> np.ndarray:
    """2x2 array of channel indices for the top-left Bayer cell."""
    return np.array([[_CHANNEL[pattern[0]], _CHANNEL[pattern[1]]],
                     [_CHANNEL[pattern[2]], _CHANNEL[pattern[3]]]])


def _masks(shape, pattern: str) -> np.ndarray:
    h, w = shape
    cell = _channel_map(pattern)
    idx = np.tile(cell, (h // 2, w // 2))
    return np.stack([idx == c for c in range(3)], axis=-1)


def mosaic(raw: np.ndarray, pattern: str = "RGGB") -> BayerImage:
    h, w = raw.shape[:2]
    if h % 2 or w % 2:
        raise ValueError(f"mosaic needs even dimensions, got {h}x{w}")
    m = _masks((h, w), pattern)
    return BayerImage(data=(raw * m).sum(axis=-1), pattern=pattern)


_K_G = np.array([[0, 1, 0], [1, 4, 1], [0, 1, 0]], dtype=np.float64) / 4.0
_K_RB = np.array([[1, 2, 1], [2, 4, 2], [1, 2, 1]], dtype=np.float64) / 4.0


def demosaic(bayer: BayerImage) -> np.ndarray:
    """Bilinear demosaic via normalized convolution of each colour plane."""
    h, w = bayer.data.shape
    if h % 2 or w % 2:
        raise ValueError(f"demosaic needs even dimensions, got {h}x{w}")
    m = _masks((h, w), bayer.pattern).astype(np.float64)
    out = np.empty((h, w, 3))
    for c in range(3):
        k = _K_G if c == 1 else _K_RB
        num = ndimage.convolve(bayer.data * m[..., c], k, mode="constant")
        den = ndimage.convolve(m[..., c], k, mode="constant")
        out[..., c] = np.where(m[..., c] > 0, bayer.data, num / den)
    return out


def add_noise(bayer: BayerImage, read_sigma: float, shot_gain: float, seed: int) -> BayerImage:
    """Heteroscedastic Gaussian noise, variance read_sigma^2 + shot_gain * v."""
    v = bayer.data
    if read_sigma == 0 and shot_gain == 0:
        return BayerImage(v.copy(), bayer.pattern)
    idx = np.arange(v.size).reshape(v.shape)
    sigma = np.sqrt(read_sigma**2 + shot_gain * np.maximum(v, 0.0))
    noisy = v + sigma * keyed_normal(seed, idx)
    return BayerImage(np.maximum(noisy, 0.0), bayer.pattern)


def forward_isp(raw: np.ndarray, p: IspParams, seed: int = 0, enable_mosaic_noise: bool = True) -> np.ndarray:
    """Linear raw RGB to display-referred RGB in [0, 1]."""
    _check_ccm(p)
    x = np.maximum(raw, 0.0)
    if enable_mosaic_noise:
        b = add_noise(mosaic(x, p.bayer_pattern), p.read_sigma, p.shot_gain, seed)
        x = demosaic(b)
    x = x * np.asarray(p.wb_gains)
    x = x @ p.ccm.T
    x = np.clip(x, 0.0, 1.0)
    return x ** (1.0 / p.gamma)
