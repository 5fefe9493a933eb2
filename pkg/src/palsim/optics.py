"""Zernike wavefronts and diffraction PSF synthesis.

Wavefront coefficients are in waves, Noll-ordered (j = 1..37) with
unit-variance normalization, i.e. the Zemax "Standard Zernike" convention.
All kernels are stored in image coordinates (x to the right, y down) for a
field point on the positive x-axis of the annular image.
"""

from __future__ import annotations

import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import special

from palsim.rng import keyed_uniform

log = logging.getLogger(__name__)

MAX_NOLL = 37


class ConfigurationError(ValueError):
    """Inputs are individually valid but inconsistent with each other."""


def noll_to_nm(j: int) -> tuple[int, int]:
    """Radial order n and signed azimuthal order m for Noll index j."""
    if not 1 <= j <= MAX_NOLL:
        raise ValueError(f"Noll index must be in 1..{MAX_NOLL}, got {j}")
    n, j1 = 0, j - 1
    while j1 > n:
        n += 1
        j1 -= n
    m = (-1) ** j * ((n % 2) + 2 * ((j1 + ((n + 1) % 2)) // 2))
    return n, m


def _radial(n: int, m: int, rho: np.ndarray) -> np.ndarray:
    # R_n^m via the Jacobi-polynomial identity
    k = (n - m) // 2
    return (-1) ** k * rho**m * special.eval_jacobi(k, m, 0, 1.0 - 2.0 * rho**2)


def zernike_eval(j: int, rho, theta):
    """Evaluate the unit-variance Noll Zernike polynomial Z_j(rho, theta)."""
    n, m = noll_to_nm(j)
    rho = np.asarray(rho, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if np.any(rho < 0) or np.any(rho > 1 + 1e-12):
        raise ValueError("rho must lie in [0, 1]")
    am = abs(m)
    r = _radial(n, am, rho)
    if m == 0:
        out = math.sqrt(n + 1) * r
    elif m > 0:
        out = math.sqrt(2 * (n + 1)) * r * np.cos(am * theta)
    else:
        out = math.sqrt(2 * (n + 1)) * r * np.sin(am * theta)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ZernikeGrid:
    """Zernike coefficients over (wavelength, field, polynomial), in waves."""

    coeffs: np.ndarray
    lambdas: np.ndarray
    fovs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64)
        lam = np.asarray(self.lambdas, dtype=np.float64)
        fov = np.asarray(self.fovs, dtype=np.float64)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "fovs", fov)
        if c.ndim != 3 or min(c.shape) < 1:
            raise ValueError(f"coeffs must be a non-empty 3-D array, got shape {c.shape}")
        if c.shape[2] > MAX_NOLL:
            raise ValueError(f"at most {MAX_NOLL} polynomials supported")
        if lam.shape != (c.shape[0],) or fov.shape != (c.shape[1],):
            raise ValueError("lambdas/fovs lengths do not match coeffs shape")
        if np.any(np.diff(lam) <= 0):
            raise ValueError("lambdas must be strictly increasing")
        if np.any(np.diff(fov) <= 0) or fov[0] < 0 or not np.isclose(fov[-1], 1.0):
            raise ValueError("fovs must be strictly increasing in [0, 1] and end at 1")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.coeffs.shape


@dataclass(frozen=True)
class OpticalPrescription:
    zernike: ZernikeGrid
    spot_radius_um: np.ndarray
    illumination: np.ndarray
    exit_pupil_distance_mm: float
    pupil_radius_mm: float

    def __post_init__(self):
        n_fov = self.zernike.shape[1]
        spot = np.broadcast_to(np.asarray(self.spot_radius_um, dtype=np.float64), (n_fov,)).copy()
        illum = np.broadcast_to(np.asarray(self.illumination, dtype=np.float64), (n_fov,)).copy()
        object.__setattr__(self, "spot_radius_um", spot)
        object.__setattr__(self, "illumination", illum)
        if np.any(spot <= 0):
            raise ValueError("spot radii must be positive")
        if np.any(illum <= 0) or np.any(illum > 1):
            raise ValueError("illumination must lie in (0, 1]")
        if self.exit_pupil_distance_mm <= 0 or self.pupil_radius_mm <= 0:
            raise ValueError("exit pupil distance and pupil radius must be positive")

    @property
    def f_number(self) -> float:
        return self.exit_pupil_distance_mm / (2.0 * self.pupil_radius_mm)


@dataclass
class PSFStack:
    """Normalized blur kernels per field.

    ``per_lambda[i]`` has shape (n_lambda, k_i, k_i) and ``per_channel[i]``
    shape (3, k_i, k_i), where ``k_i = kernel_sizes[i]``.
    """

    per_lambda: list
    per_channel: list
    kernel_sizes: np.ndarray
    fovs: np.ndarray
    lambdas: np.ndarray
    illumination: np.ndarray
    pixel_size_um: float
    meta: dict = field(default_factory=dict)

    @property
    def n_fov(self) -> int:
        return len(self.fovs)

    @property
    def max_kernel_size(self) -> int:
        return int(np.max(self.kernel_sizes))

    def fov_index(self, t) -> np.ndarray:
        """Nearest sampled field for normalized field heights ``t``."""
        t = np.clip(np.asarray(t, dtype=np.float64), self.fovs[0], self.fovs[-1])
        idx = np.searchsorted(self.fovs, t)
        idx = np.clip(idx, 1, len(self.fovs) - 1) if len(self.fovs) > 1 else np.zeros_like(idx)
        if len(self.fovs) > 1:
            left = self.fovs[idx - 1]
            right = self.fovs[idx]
            idx = np.where(np.abs(t - left) <= np.abs(right - t), idx - 1, idx)
        return idx


# -- wavefront -----------------------------------------------------------------


def pupil_coords(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalized pupil radius and azimuth on an n x n grid centred between pixels."""
    c = (np.arange(n) - (n - 1) / 2.0) / (n / 2.0)
    x, y = np.meshgrid(c, c)
    return np.hypot(x, y), np.arctan2(y, x)


@lru_cache(maxsize=4)
def _basis(n: int, n_poly: int) -> tuple[np.ndarray, np.ndarray]:
    rho, theta = pupil_coords(n)
    inside = rho <= 1.0
    r, t = rho[inside], theta[inside]
    basis = np.stack([zernike_eval(j, r, t) for j in range(1, n_poly + 1)])
    basis.setflags(write=False)
    inside.setflags(write=False)
    return inside, basis


@lru_cache(maxsize=4)
def _pupil_mask(n: int) -> np.ndarray:
    inside = pupil_coords(n)[0] <= 1.0
    inside.setflags(write=False)
    return inside


def _check_pupil_samples(n: int):
    if n < 64 or n & (n - 1):
        raise ValueError(f"pupil_samples must be a power of two >= 64, got {n}")


def wavefront_from_coeffs(coeffs, pupil_samples: int) -> np.ndarray:
    """Sum of C_j Z_j over the unit pupil disc, zero outside (waves)."""
    _check_pupil_samples(pupil_samples)
    coeffs = np.asarray(coeffs, dtype=np.float64)
    inside, basis = _basis(pupil_samples, len(coeffs))
    phase = np.zeros((pupil_samples, pupil_samples))
    phase[inside] = coeffs @ basis
    return phase


def wavefront(grid: ZernikeGrid, fov_index: int, lambda_index: int, pupil_samples: int = 512) -> np.ndarray:
    return wavefront_from_coeffs(grid.coeffs[lambda_index, fov_index], pupil_samples)


# -- diffraction ---------------------------------------------------------------


def diffraction_sample_um(lam_nm: float, d_mm: float, pupil_radius_mm: float, n: int, pad: int) -> float:
    """Image-plane spacing of the padded DFT, in micrometres."""
    delta_mm = 2.0 * pupil_radius_mm / n
    return lam_nm * 1e-6 * d_mm / (pad * n * delta_mm) * 1e3


def _dft_matrix(freqs: np.ndarray, n: int, m: int) -> np.ndarray:
    c = np.arange(n) - (n - 1) / 2.0
    return np.exp(-2j * np.pi * np.outer(freqs, c) / m)


def padded_dft_window(field_: np.ndarray, pad: int, half: int) -> np.ndarray:
    """Samples q in [-half, half] of the DFT of ``field_`` zero-padded to pad*N.

    Equivalent to cropping the centred FFT of the padded array, but only the
    needed (2*half+1)^2 outputs are computed.
    """
    n = field_.shape[0]
    q = np.arange(-half, half + 1, dtype=np.float64)
    a = _dft_matrix(q, n, pad * n)
    return a @ field_ @ a.T


def required_pupil_samples(kernel_px: int, pixel_size_um: float, lam_nm: float, f_number: float) -> int:
    """Smallest power-of-two pupil grid whose image field covers the kernel."""
    need = kernel_px * pixel_size_um / (lam_nm * 1e-3 * f_number)
    return max(64, 1 << math.ceil(math.log2(max(need, 1.0))))


def quadrature_order(pixel_size_um: float, sample_um: float) -> int:
    """Gauss-Legendre nodes per pixel axis: finer diffraction sampling, more nodes."""
    return int(math.ceil(pixel_size_um / sample_um - 1e-9)) + 2


def psf_from_wavefront(phase: np.ndarray, lam_nm: float, d_mm: float, pupil_radius_mm: float,
                       kernel_px: int, pixel_size_um: float | None = None, pad: int = 2) -> np.ndarray:
    """Incoherent PSF |E|^2 of a circular pupil with the given phase (waves).

    With ``pixel_size_um`` the intensity is integrated over each sensor pixel
    by Gauss-Legendre quadrature, the field being evaluated exactly at the
    nodes; the node count grows with the zero-padding factor ``pad``.  Without
    it the kernel is cropped directly from the padded-DFT samples.
    """
    n = phase.shape[0]
    if kernel_px % 2 == 0 or kernel_px < 1:
        raise ValueError(f"kernel_px must be a positive odd integer, got {kernel_px}")
    if kernel_px > n:
        raise ValueError(f"kernel_px={kernel_px} exceeds pupil grid N={n}")
    if kernel_px == 1:
        return np.ones((1, 1))
    inside = _pupil_mask(n)
    pupil = np.zeros((n, n), dtype=np.complex128)
    pupil[inside] = np.exp(2j * np.pi * phase[inside])
    r = kernel_px // 2
    if pixel_size_um is None:
        e = padded_dft_window(pupil, pad, r)
        k = np.abs(e) ** 2
    else:
        dx = diffraction_sample_um(lam_nm, d_mm, pupil_radius_mm, n, pad)
        period_um = pad * n * dx
        if kernel_px * pixel_size_um > period_um:
            f_number = d_mm / (2.0 * pupil_radius_mm)
            need = required_pupil_samples(kernel_px, pixel_size_um, lam_nm, f_number)
            raise ConfigurationError(
                f"kernel of {kernel_px} px x {pixel_size_um} um exceeds the diffraction field "
                f"({period_um:.1f} um) at N={n}; need N >= {need}")
        g = quadrature_order(pixel_size_um, dx)
        nodes, weights = np.polynomial.legendre.leggauss(g)
        pos = ((np.arange(-r, r + 1)[:, None] + nodes / 2.0) * pixel_size_um).ravel()
        a = _dft_matrix(pos / dx, n, pad * n)
        e = a @ pupil @ a.T
        w = np.outer(weights, weights)[None, :, None, :]
        k = ((np.abs(e) ** 2).reshape(kernel_px, g, kernel_px, g) * w).sum(axis=(1, 3))
    k = np.maximum(k, 0.0)
    return k / k.sum()


def kernel_size_for_spot(spot_radius_um: float, pixel_size_um: float) -> int:
    """Nearest odd integer to the spot diameter in pixels (at least 1)."""
    x = 2.0 * spot_radius_um / pixel_size_um
    return max(1, 2 * int(math.floor((x - 1.0) / 2.0 + 0.5)) + 1)


# -- stacks --------------------------------------------------------------------


def rgb_collapse(per_lambda: np.ndarray, response: np.ndarray) -> np.ndarray:
    """Response-weighted sum over wavelength: (n_lambda, k, k) -> (3, k, k)."""
    response = np.asarray(response, dtype=np.float64)
    if np.any(response < 0):
        raise ValueError("spectral response must be non-negative")
    if response.ndim != 2 or response.shape[1] != per_lambda.shape[0]:
        raise ValueError("response must have shape (channels, n_lambda)")
    out = np.tensordot(response, per_lambda, axes=(1, 0))
    return out / out.sum(axis=(1, 2), keepdims=True)


def synthesize_psf_stack(prescription: OpticalPrescription, sensor, pupil_samples: int = 512,
                         pad: int = 2, threads: int = 1) -> PSFStack:
    """Diffraction kernels for every (field, wavelength) of a prescription."""
    _check_pupil_samples(pupil_samples)
    grid = prescription.zernike
    n_lam, n_fov, _ = grid.shape
    if np.asarray(sensor.response).shape[1] != n_lam:
        raise ConfigurationError("sensor response does not match the prescription wavelengths")
    pitch = sensor.pixel_size_um
    sizes = np.array([kernel_size_for_spot(s, pitch) for s in prescription.spot_radius_um])
    lam_min = float(grid.lambdas.min())
    need = required_pupil_samples(int(sizes.max()), pitch, lam_min, prescription.f_number)
    if sizes.max() > pupil_samples or need > pupil_samples:
        raise ConfigurationError(
            f"largest kernel ({sizes.max()} px) needs pupil_samples >= {need}, got {pupil_samples}")

    def one_field(i: int) -> np.ndarray:
        ks = np.empty((n_lam, sizes[i], sizes[i]))
        for li in range(n_lam):
            phase = wavefront(grid, i, li, pupil_samples)
            ks[li] = psf_from_wavefront(phase, grid.lambdas[li], prescription.exit_pupil_distance_mm,
                                        prescription.pupil_radius_mm, int(sizes[i]), pitch, pad)
        return ks

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_lambda = list(pool.map(one_field, range(n_fov)))
    else:
        per_lambda = [one_field(i) for i in range(n_fov)]
    per_channel = [rgb_collapse(k, sensor.response) for k in per_lambda]
    return PSFStack(per_lambda=per_lambda, per_channel=per_channel, kernel_sizes=sizes,
                    fovs=grid.fovs.copy(), lambdas=grid.lambdas.copy(),
                    illumination=prescription.illumination.copy(), pixel_size_um=float(pitch),
                    meta={"pupil_samples": pupil_samples, "pad": pad})


def perturb(prescription: OpticalPrescription, range_fraction: float, seed: int) -> OpticalPrescription:
    """Scale every coefficient by (1 + u), u ~ U[-range, range] keyed by its grid position."""
    if not 0 <= range_fraction < 1:
        raise ValueError("range_fraction must lie in [0, 1)")
    grid = prescription.zernike
    if range_fraction == 0:
        return prescription
    li, fi, ji = np.indices(grid.shape)
    u = range_fraction * (2.0 * keyed_uniform(seed, li, fi, ji + 1) - 1.0)
    coeffs = grid.coeffs * (1.0 + u)
    return replace(prescription, zernike=replace(grid, coeffs=coeffs))


def delta_stack(n_fov: int = 1, kernel_px: int = 1, pixel_size_um: float = 1.0, n_lambda: int = 1) -> PSFStack:
    """Stack of centred delta kernels (identity blur)."""
    k = np.zeros((kernel_px, kernel_px))
    k[kernel_px // 2, kernel_px // 2] = 1.0
    fovs = np.linspace(0.0, 1.0, n_fov) if n_fov > 1 else np.array([1.0])
    return PSFStack(per_lambda=[np.repeat(k[None], n_lambda, 0) for _ in range(n_fov)],
                    per_channel=[np.repeat(k[None], 3, 0) for _ in range(n_fov)],
                    kernel_sizes=np.full(n_fov, kernel_px), fovs=fovs,
                    lambdas=np.linspace(400, 700, n_lambda) if n_lambda > 1 else np.array([550.0]),
                    illumination=np.ones(n_fov), pixel_size_um=pixel_size_um)


def uniform_stack(kernel: np.ndarray, n_fov: int = 1, pixel_size_um: float = 1.0) -> PSFStack:
    """Stack with the same (normalized) kernel at every field and channel."""
    k = np.asarray(kernel, dtype=np.float64)
    k = k / k.sum()
    fovs = np.linspace(0.0, 1.0, n_fov) if n_fov > 1 else np.array([1.0])
    return PSFStack(per_lambda=[k[None].copy() for _ in range(n_fov)],
                    per_channel=[np.repeat(k[None], 3, 0) for _ in range(n_fov)],
                    kernel_sizes=np.full(n_fov, k.shape[0]), fovs=fovs, lambdas=np.array([550.0]),
                    illumination=np.ones(n_fov), pixel_size_um=pixel_size_um)


def rotate_kernel(kernel: np.ndarray, angle: float) -> np.ndarray:
    """Rotate a square kernel about its centre by ``angle`` (radians), renormalized.

    Coordinates are image coordinates, so a positive angle turns the +x axis
    towards +y (downwards), matching ``atan2(y - cy, x - cx)`` azimuths.
    """
    k = kernel.shape[0]
    if k == 1:
        return kernel.copy()
    return rotate_kernels(kernel, np.array([angle]))[0]


def rotate_kernels(kernel: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Batch version of :func:`rotate_kernel`: returns (len(angles), k, k).

    Bilinear pull sampling, except that the centre tap only feeds the centre
    output: any weight it would give a neighbour is dropped and the
    neighbour's remaining weights renormalized. A centred delta therefore
    stays a delta, while smooth kernels keep second-order accuracy.
    """
    k = kernel.shape[0]
    c = k // 2
    angles = np.asarray(angles, dtype=np.float64)
    n = len(angles)
    if k == 1:
        return np.repeat(kernel[None], n, 0)
    v, u = np.mgrid[-c:c + 1, -c:c + 1].astype(np.float64)
    cos = np.cos(angles)[:, None, None]
    sin = np.sin(angles)[:, None, None]
    # inverse map: where each output pixel comes from
    xs = cos * u + sin * v + c
    ys = -sin * u + cos * v + c
    # snap round-off so exact quarter turns stay exact
    xs = np.where(np.abs(xs - np.round(xs)) < 1e-9, np.round(xs), xs)
    ys = np.where(np.abs(ys - np.round(ys)) < 1e-9, np.round(ys), ys)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx, fy = xs - x0, ys - y0
    centre_out = (u == 0) & (v == 0)
    out = np.zeros(xs.shape)
    dropped = np.zeros(xs.shape)
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            yi, xi = y0 + dy, x0 + dx
            w = wy * wx
            ok = (yi >= 0) & (yi < k) & (xi >= 0) & (xi < k)
            val = kernel[np.clip(yi, 0, k - 1), np.clip(xi, 0, k - 1)]
            drop = (yi == c) & (xi == c) & ~centre_out
            dropped += np.where(drop, w, 0.0)
            out += np.where(ok & ~drop, val * w, 0.0)
    keep = 1.0 - dropped
    out = np.where(keep > 1e-12, out / np.where(keep > 1e-12, keep, 1.0), 0.0)
    s = out.sum(axis=(1, 2), keepdims=True)
    return out / np.where(s > 0, s, 1.0)
