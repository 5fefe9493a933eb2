"""PSF map: per-pixel compressed PSF intensities plus kernel-size channels.

For each pixel the kernel of its field is rotated to the pixel azimuth,
zero-padded to the largest kernel of the stack, average-pooled to
k' x k' and written into k'^2 channels.  Three more channels hold the
per-channel kernel size normalized by the stack maximum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from palsim.optics import PSFStack, rotate_kernels
from palsim.simulate import AnnularImage

LUMA = np.array([0.299, 0.587, 0.114])
CHANNELS = {"R": 0, "G": 1, "B": 2}


@dataclass
class PSFMap:
    data: np.ndarray
    k_prime: int

    @property
    def intensity(self) -> np.ndarray:
        return self.data[..., : self.k_prime**2]

    @property
    def sizes(self) -> np.ndarray:
        return self.data[..., self.k_prime**2:]

    @property
    def n_channels(self) -> int:
        return self.data.shape[-1]


def pool_matrix(length: int, k_prime: int) -> np.ndarray:
    """Adaptive average pooling as a (k_prime, length) matrix."""
    m = np.zeros((k_prime, length))
    for i in range(k_prime):
        start = (i * length) // k_prime
        end = -((-(i + 1) * length) // k_prime)
        m[i, start:end] = 1.0 / (end - start)
    return m


def compress_kernel(kernel: np.ndarray, k_prime: int, max_size: int | None = None) -> np.ndarray:
    """Zero-pad to ``max_size``, pool to k' x k' and renormalize to sum 1."""
    return compress_kernels(kernel[None], k_prime, max_size)[0]


def compress_kernels(kernels: np.ndarray, k_prime: int, max_size: int | None = None) -> np.ndarray:
    k = kernels.shape[-1]
    if k_prime < 1 or k_prime % 2 == 0:
        raise ValueError(f"k_prime must be a positive odd integer, got {k_prime}")
    max_size = k if max_size is None else max_size
    if max_size < k:
        raise ValueError("max_size smaller than the kernel")
    off = (max_size - k) // 2
    p = pool_matrix(max_size, k_prime)[:, off:off + k]
    out = np.einsum("ia,nab,jb->nij", p, kernels, p)
    s = out.sum(axis=(1, 2), keepdims=True)
    return out / np.where(s > 0, s, 1.0)


def _select(stack: PSFStack, fov: int, channel: str) -> np.ndarray:
    ks = stack.per_channel[fov]
    if channel.upper() == "LUMA":
        k = np.tensordot(LUMA, ks, axes=(0, 0))
        return k / k.sum()
    if channel.upper() not in CHANNELS:
        raise ValueError(f"channel must be R, G, B or luma, got {channel!r}")
    return ks[CHANNELS[channel.upper()]]


def build(stack: PSFStack, image: AnnularImage, k_prime: int = 5, channel: str = "G",
          chunk: int = 8192) -> PSFMap:
    """PSF map aligned with ``image`` (only its shape and geometry are used)."""
    if stack.n_fov < 1 or len(stack.per_channel) != stack.n_fov:
        raise ValueError("stack has no per-channel kernels")
    h, w = image.shape[:2]
    r, phi = image.polar()
    blind = r < image.r_blind
    fov = stack.fov_index(image.normalized_field(r))
    fov = np.where(blind, 0, fov)
    phi = np.where(blind, 0.0, phi)

    kmax = stack.max_kernel_size
    nk = k_prime**2
    data = np.zeros((h * w, nk + 3))
    fov_flat, phi_flat = fov.ravel(), phi.ravel()
    sizes = stack.kernel_sizes / float(kmax)
    for i in np.unique(fov_flat):
        kernel = _select(stack, int(i), channel)
        idx = np.flatnonzero(fov_flat == i)
        for s in range(0, len(idx), chunk):
            sel = idx[s:s + chunk]
            rot = rotate_kernels(kernel, phi_flat[sel])
            data[sel, :nk] = compress_kernels(rot, k_prime, kmax).reshape(len(sel), nk)
        data[idx, nk:] = sizes[i]
    return PSFMap(data.reshape(h, w, nk + 3), k_prime)


def downscale_map(psf_map: PSFMap, factor: int) -> PSFMap:
    """Area-average every channel by ``factor`` and renormalize the intensities."""
    h, w, c = psf_map.data.shape
    if factor < 1 or h % factor or w % factor:
        raise ValueError(f"map {h}x{w} not divisible by {factor}")
    if factor == 1:
        return PSFMap(psf_map.data.copy(), psf_map.k_prime)
    d = psf_map.data.reshape(h // factor, factor, w // factor, factor, c).mean(axis=(1, 3))
    nk = psf_map.k_prime**2
    s = d[..., :nk].sum(axis=-1, keepdims=True)
    d[..., :nk] /= np.where(s > 0, s, 1.0)
    return PSFMap(d, psf_map.k_prime)
