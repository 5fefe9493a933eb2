import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import gaussian_kernel
from palsim.isp import IspParams, SensorModel
from palsim.optics import (
    ConfigurationError, OpticalPrescription, ZernikeGrid, kernel_size_for_spot, noll_to_nm, padded_dft_window,
    perturb, psf_from_wavefront, rgb_collapse, rotate_kernel, synthesize_psf_stack, wavefront,
    wavefront_from_coeffs, zernike_eval,
)

# Noll table for the first 11 terms (n, m)
NOLL = [(0, 0), (1, 1), (1, -1), (2, 0), (2, -2), (2, 2), (3, -1), (3, 1), (3, -3), (3, 3), (4, 0)]


def zernike_oracle(j, rho, theta):
    """Explicit factorial-sum radial polynomial with Noll normalization."""
    n, m = noll_to_nm(j)
    am = abs(m)
    r = sum((-1) ** s * math.factorial(n - s)
            / (math.factorial(s) * math.factorial((n + am) // 2 - s) * math.factorial((n - am) // 2 - s))
            * rho ** (n - 2 * s) for s in range((n - am) // 2 + 1))
    if m == 0:
        return math.sqrt(n + 1) * r
    ang = math.cos(am * theta) if m > 0 else math.sin(am * theta)
    return math.sqrt(2 * (n + 1)) * r * ang


def test_noll_table():
    assert [noll_to_nm(j) for j in range(1, 12)] == NOLL
    assert noll_to_nm(37) == (8, 0)


def test_zernike_closed_forms():
    assert zernike_eval(1, 0.3, 1.2) == 1.0
    assert zernike_eval(4, 1.0, 0.0) == pytest.approx(math.sqrt(3))
    assert zernike_eval(11, 0.5, 0.3) == pytest.approx(zernike_oracle(11, 0.5, 0.3), abs=1e-12)


@given(st.integers(1, 37), st.floats(0, 1), st.floats(-math.pi, math.pi))
def test_zernike_matches_factorial_oracle(j, rho, theta):
    assert zernike_eval(j, rho, theta) == pytest.approx(zernike_oracle(j, rho, theta), abs=1e-9)


def test_zernike_unit_variance_and_orthogonality():
    n = 512
    c = (np.arange(n) - (n - 1) / 2) / (n / 2)
    x, y = np.meshgrid(c, c)
    rho, th = np.hypot(x, y), np.arctan2(y, x)
    ins = rho <= 1
    z = np.stack([zernike_eval(j, rho[ins], th[ins]) for j in range(1, 16)])
    gram = z @ z.T / ins.sum()
    assert np.allclose(gram, np.eye(15), atol=0.02)


def test_zernike_bad_index():
    with pytest.raises(ValueError):
        zernike_eval(0, 0.5, 0)
    with pytest.raises(ValueError):
        zernike_eval(38, 0.5, 0)


def test_wavefront_examples():
    assert np.all(wavefront_from_coeffs(np.zeros(37), 64) == 0)
    ph = wavefront_from_coeffs([0.7], 128)
    c = (np.arange(128) - 63.5) / 64
    ins = np.hypot(*np.meshgrid(c, c)) <= 1
    assert np.allclose(ph[ins], 0.7) and np.all(ph[~ins] == 0)
    coeffs = np.zeros(11)
    coeffs[3], coeffs[10] = 0.3, 0.1
    ph = wavefront_from_coeffs(coeffs, 256)
    c = (np.arange(256) - 127.5) / 128
    x, y = np.meshgrid(c, c)
    rho, th = np.hypot(x, y), np.arctan2(y, x)
    ins = rho <= 1
    want = 0.3 * zernike_eval(4, rho[ins], th[ins]) + 0.1 * zernike_eval(11, rho[ins], th[ins])
    assert np.allclose(ph[ins], want, atol=1e-12)
    with pytest.raises(ValueError):
        wavefront_from_coeffs([0.1], 100)


def test_wavefront_reads_grid():
    coeffs = np.zeros((2, 2, 4))
    coeffs[1, 0, 3] = 0.25
    grid = ZernikeGrid(coeffs, [500, 600], [0.0, 1.0])
    assert np.allclose(wavefront(grid, 0, 1, 64), wavefront_from_coeffs([0, 0, 0, 0.25], 64))


def test_padded_window_equals_fft():
    rng = np.random.default_rng(0)
    f = rng.normal(size=(32, 32)) + 1j * rng.normal(size=(32, 32))
    pad = 2
    big = np.zeros((64, 64), complex)
    big[16:48, 16:48] = f
    # oracle: centred FFT with the half-pixel grid centre as phase origin
    q = np.fft.fftshift(np.fft.fftfreq(64) * 64)
    spec = np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(big)))
    shift = np.exp(-1j * np.pi * q / 64 * -1)  # grid centre sits half a pixel below index N/2
    spec = spec * np.outer(shift, shift)
    win = padded_dft_window(f, pad, 5)
    sel = slice(32 - 5, 32 + 6)
    assert np.allclose(np.abs(win), np.abs(spec[sel, sel]), atol=1e-9)


def test_airy_symmetric_peak_centre():
    k = psf_from_wavefront(np.zeros((256, 256)), 550, 10, 2, 15, 1.34)
    assert np.max(np.abs(k - k[::-1, ::-1])) < 1e-9
    assert np.unravel_index(k.argmax(), k.shape) == (7, 7)
    assert k.sum() == pytest.approx(1, abs=1e-12) and k.min() >= 0


def test_piston_invariance():
    base = wavefront_from_coeffs([0, 0, 0, 0.4, 0.1], 128)
    k0 = psf_from_wavefront(base, 550, 10, 2, 11, 1.34)
    k1 = psf_from_wavefront(base + 0.37 * (base != 0) + 0.37 * (base == 0), 550, 10, 2, 11, 1.34)
    assert np.max(np.abs(k0 - k1)) < 1e-9


def test_padding_consistency():
    ph = np.zeros((256, 256))
    a = psf_from_wavefront(ph, 550, 10, 2, 21, 0.5, pad=2)
    b = psf_from_wavefront(ph, 550, 10, 2, 21, 0.5, pad=4)
    assert np.abs(a - b).sum() / np.abs(a).sum() < 0.01


def test_kernel_px_edge_cases():
    assert np.array_equal(psf_from_wavefront(np.zeros((64, 64)), 550, 10, 2, 1), [[1.0]])
    with pytest.raises(ValueError):
        psf_from_wavefront(np.zeros((64, 64)), 550, 10, 2, 65)
    with pytest.raises(ValueError):
        psf_from_wavefront(np.zeros((64, 64)), 550, 10, 2, 4)


def test_field_limit_reports_required_n():
    with pytest.raises(ConfigurationError, match="need N >= 128"):
        psf_from_wavefront(np.zeros((64, 64)), 550, 10, 2, 49, 2.0)


def test_defocus_spread_monotone():
    def spread(c4):
        k = psf_from_wavefront(wavefront_from_coeffs([0, 0, 0, c4], 128), 550, 10, 2, 31, 1.34)
        y, x = np.indices(k.shape) - 15
        return (k * (x**2 + y**2)).sum()

    vals = [spread(c) for c in (0.0, 0.5, 1.0, 1.5, 2.0)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_kernel_size_for_spot():
    assert kernel_size_for_spot(13.78, 1.34) == 21
    assert kernel_size_for_spot(0.5, 1.0) == 1
    assert kernel_size_for_spot(46.26, 4.0) == 23
    for spot in np.linspace(0.1, 40, 200):
        k = kernel_size_for_spot(spot, 1.34)
        assert k % 2 == 1 and abs(k - 2 * spot / 1.34) <= 1 + 1e-9


def test_rgb_collapse():
    k = gaussian_kernel(9, 1.0)
    assert np.allclose(rgb_collapse(k[None], np.ones((3, 1))), k)
    assert np.allclose(rgb_collapse(np.stack([k, k]), np.full((3, 2), 0.5)), k)
    g1, g2 = gaussian_kernel(9, 1.0), gaussian_kernel(9, 2.5)
    resp = np.array([[0.3, 0.7]] * 3)
    want = np.zeros_like(g1)
    for w, g in zip((0.3, 0.7), (g1, g2)):
        for i in range(9):
            for j in range(9):
                want[i, j] += w * g[i, j]
    assert np.allclose(rgb_collapse(np.stack([g1, g2]), resp)[0], want / want.sum(), atol=1e-12)
    with pytest.raises(ValueError):
        rgb_collapse(np.stack([g1, g2]), np.array([[-0.1, 1.1]] * 3))


def _one_field(spot_um, coeffs=None):
    grid = ZernikeGrid(np.zeros((1, 1, 4)) if coeffs is None else coeffs, [550.0], [1.0])
    return OpticalPrescription(grid, spot_um, 1.0, 10.0, 2.0)


def test_synthesize_single_delta():
    sensor = SensorModel(1.0, (8, 8), np.ones((3, 1)), IspParams.identity())
    st_ = synthesize_psf_stack(_one_field(0.5), sensor, pupil_samples=64)
    assert st_.kernel_sizes.tolist() == [1]
    assert np.array_equal(st_.per_lambda[0][0], [[1.0]])


def test_synthesize_stack_invariants(small_stack, small_prescription):
    assert len(small_stack.kernel_sizes) == 4
    assert all(k % 2 == 1 for k in small_stack.kernel_sizes)
    for pl, pc, k in zip(small_stack.per_lambda, small_stack.per_channel, small_stack.kernel_sizes):
        assert pl.shape == (3, k, k) and pc.shape == (3, k, k)
        assert pl.min() >= 0 and np.allclose(pl.sum(axis=(1, 2)), 1, atol=1e-6)
        assert np.allclose(pc.sum(axis=(1, 2)), 1, atol=1e-6)
    assert np.array_equal(small_stack.illumination, small_prescription.illumination)


def test_synthesize_too_large_raises():
    sensor = SensorModel(1.34, (8, 8), np.ones((3, 1)), IspParams.identity())
    with pytest.raises(ConfigurationError, match="pupil_samples >="):
        synthesize_psf_stack(_one_field(60.0), sensor, pupil_samples=64)


def test_synthesize_thread_invariant(small_prescription, identity_sensor):
    a = synthesize_psf_stack(small_prescription, identity_sensor, pupil_samples=128, threads=1)
    b = synthesize_psf_stack(small_prescription, identity_sensor, pupil_samples=128, threads=3)
    assert all(np.array_equal(x, y) for x, y in zip(a.per_lambda, b.per_lambda))


def test_perturb(small_prescription):
    assert perturb(small_prescription, 0.0, 7) is small_prescription
    p = perturb(small_prescription, 0.25, 7)
    c0, c1 = small_prescription.zernike.coeffs, p.zernike.coeffs
    nz = c0 != 0
    assert np.all(np.abs(c1[nz] / c0[nz] - 1) <= 0.25)
    assert np.all(c1[~nz] == 0)
    assert np.array_equal(perturb(small_prescription, 0.25, 7).zernike.coeffs, c1)
    assert not np.array_equal(perturb(small_prescription, 0.25, 8).zernike.coeffs, c1)
    with pytest.raises(ValueError):
        perturb(small_prescription, 1.0, 7)


@given(st.integers(0, 2**31), st.floats(0.01, 0.99))
def test_perturb_bounded_property(seed, rng_frac):
    coeffs = np.linspace(-1, 1, 2 * 3 * 5).reshape(2, 3, 5)
    grid = ZernikeGrid(coeffs, [500, 600], [0, 0.5, 1])
    p = OpticalPrescription(grid, 10.0, 1.0, 10, 2)
    out = perturb(p, rng_frac, seed).zernike.coeffs
    nz = coeffs != 0
    assert np.all(np.abs(out[nz] / coeffs[nz] - 1) <= rng_frac + 1e-12)


def test_grid_validation():
    with pytest.raises(ValueError):
        ZernikeGrid(np.zeros((2, 2, 4)), [600, 500], [0, 1])
    with pytest.raises(ValueError):
        ZernikeGrid(np.zeros((1, 2, 4)), [500], [0, 0.5])
    with pytest.raises(ValueError):
        OpticalPrescription(ZernikeGrid(np.zeros((1, 1, 1)), [500], [1]), 1.0, 1.5, 10, 2)


def test_rotate_kernel():
    k = np.zeros((5, 5))
    k[2, 4] = 1.0  # point on +x
    r = rotate_kernel(k, np.pi / 2)  # +x turns to +y (down)
    assert r[4, 2] == pytest.approx(1.0, abs=1e-9)
    # bilinear rotation error falls as 1/sigma^2: 1e-3 L1 holds for SR&AC P2-scale kernels
    wide = gaussian_kernel(97, 12.0)
    for a in np.linspace(0, 2 * np.pi, 7):
        assert np.abs(rotate_kernel(wide, a) - wide).sum() < 1e-3
    narrow = gaussian_kernel(13, 1.5)
    for a in np.linspace(0, 2 * np.pi, 7):
        assert np.abs(rotate_kernel(narrow, a) - narrow).sum() < 0.06
    rng = np.random.default_rng(1)
    q = rng.random((9, 9))
    q /= q.sum()
    assert np.abs(rotate_kernel(q, 2 * np.pi) - q).sum() < 1e-3
