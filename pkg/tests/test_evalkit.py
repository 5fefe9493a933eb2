import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import ndimage
from skimage.metrics import peak_signal_noise_ratio, structural_similarity

from palsim import evalkit as ek
from palsim.scenes import checkerboard, slanted_edge


def gaussian_mtf(f, sigma):
    return np.exp(-2 * np.pi**2 * sigma**2 * f**2)


def gaussian_mtf50(sigma):
    return math.sqrt(math.log(2) / (2 * math.pi**2 * sigma**2))


# -- PSNR / SSIM ---------------------------------------------------------------


def test_psnr_closed_form():
    assert ek.psnr(np.zeros((8, 8, 3)), np.full((8, 8, 3), 0.1)) == pytest.approx(20.0, abs=1e-9)
    a = np.random.default_rng(0).random((8, 8, 3))
    assert ek.psnr(a, a) == ek.PSNR_CAP_DB


def test_psnr_matches_skimage_and_is_symmetric():
    rng = np.random.default_rng(1)
    a, b = rng.random((40, 30, 3)), rng.random((40, 30, 3))
    assert ek.psnr(a, b) == pytest.approx(peak_signal_noise_ratio(a, b, data_range=1.0), abs=0.01)
    assert ek.psnr(a, b) == ek.psnr(b, a)


def test_psnr_mask():
    a = np.zeros((4, 4, 3))
    b = np.zeros((4, 4, 3))
    b[0, 0] = 1.0
    mask = np.ones((4, 4), bool)
    mask[0, 0] = False
    assert ek.psnr(a, b, mask) == ek.PSNR_CAP_DB
    with pytest.raises(ValueError):
        ek.psnr(a, b, np.ones((3, 3), bool))
    with pytest.raises(ValueError):
        ek.psnr(a, np.zeros((4, 5, 3)))


def test_ssim_matches_skimage():
    rng = np.random.default_rng(2)
    a = ndimage.gaussian_filter(rng.random((64, 64, 3)), (1, 1, 0))
    b = np.clip(a + 0.05 * rng.standard_normal(a.shape), 0, 1)
    ref = structural_similarity(ek.luma(a), ek.luma(b), gaussian_weights=True, sigma=1.5,
                                use_sample_covariance=False, data_range=1.0)
    assert ek.ssim(a, b) == pytest.approx(ref, abs=1e-3)
    assert ek.ssim(a, a) == pytest.approx(1.0, abs=1e-12)


# -- SFR -------------------------------------------------------------------------


def test_sfr_ideal_step():
    c = ek.sfr(slanted_edge((64, 64), 5.0), oversample=4)
    assert c.values[0] == pytest.approx(1.0)
    assert np.interp(0.25, c.frequencies, c.values) >= 0.95
    assert c.frequencies.max() <= 0.5


@pytest.mark.parametrize("angle", [3.0, 5.0, 8.0])
def test_sfr_gaussian_oracle(angle):
    sigma = 1.5
    c = ek.sfr(slanted_edge((96, 96), angle, sigma=sigma))
    sel = c.frequencies <= 0.35
    assert np.abs(c.values[sel] - gaussian_mtf(c.frequencies[sel], sigma)).max() < 0.03
    assert ek.mtf50(c) == pytest.approx(gaussian_mtf50(sigma), rel=0.05)


def test_sfr_affine_invariance():
    patch = slanted_edge((64, 64), 4.0, sigma=1.0)
    base = ek.sfr(patch)
    other = ek.sfr(3.0 * patch + 0.4)
    np.testing.assert_allclose(other.values, base.values, atol=1e-6)


def test_sfr_monotone_under_blur():
    prev50, prev_area = 1.0, 1.0
    for sigma in (0.8, 1.2, 1.6, 2.0):
        c = ek.sfr(slanted_edge((96, 96), 5.0, sigma=sigma))
        assert ek.mtf50(c) <= prev50 and ek.mtf_area(c) <= prev_area
        prev50, prev_area = ek.mtf50(c), ek.mtf_area(c)


def test_sfr_rejects_bad_patches():
    with pytest.raises(ek.MeasurementError):
        ek.sfr(slanted_edge((64, 64), 0.0, sigma=1.0))
    with pytest.raises(ek.MeasurementError):
        ek.sfr(np.full((64, 64), 0.3))
    with pytest.raises(ek.MeasurementError):
        ek.sfr(np.zeros((4, 4)))


def test_sfr_accepts_rgb():
    edge = slanted_edge((64, 64), 5.0, sigma=1.0)
    rgb = np.repeat(edge[..., None], 3, axis=2)
    np.testing.assert_allclose(ek.sfr(rgb).values, ek.sfr(edge).values, atol=1e-12)


# -- MTF summaries / OIQE ----------------------------------------------------------


def test_mtf50_area_constant_and_linear():
    f = np.linspace(0, 0.5, 51)
    const = ek.MtfCurve(f, np.ones_like(f))
    assert ek.mtf50(const) == 0.5 and ek.mtf_area(const) == pytest.approx(0.5)
    lin = ek.MtfCurve(f, 1 - 2 * f)
    assert ek.mtf50(lin) == pytest.approx(0.25) and ek.mtf_area(lin) == pytest.approx(0.25)


def test_mtf50_gaussian_curve():
    f = np.linspace(0, 0.5, 201)
    c = ek.MtfCurve(f, gaussian_mtf(f, 1.5))
    assert ek.mtf50(c) == pytest.approx(gaussian_mtf50(1.5), rel=0.05)


def test_mtf_curve_validation():
    with pytest.raises(ValueError):
        ek.MtfCurve([0.0], [1.0])
    with pytest.raises(ValueError):
        ek.MtfCurve([0.0, 0.1], [1.0])


def _curve(m50):
    """Linear roll-off through 0.5 at ``m50``, clipped at 0."""
    f = np.linspace(0, 0.5, 501)
    return ek.MtfCurve(f, np.clip(1 - f / (2 * m50), 0, 1))


def test_oiqe_identity_exact():
    curves = [_curve(0.1), _curve(0.2)]
    assert ek.oiqe(curves, curves) == (1.0, 1.0, 1.0)


@given(st.lists(st.floats(0.05, 0.24), min_size=1, max_size=4))
def test_oiqe_self_is_one(m50s):
    curves = [_curve(m) for m in m50s]
    assert ek.oiqe(curves, curves) == (1.0, 1.0, 1.0)


def test_oiqe_half_mtf50_equal_area():
    f = np.linspace(0, 0.5, 5001)
    ref = ek.MtfCurve(f, 1 - 2 * f)  # MTF50 0.25, area 0.25
    # drops from 1 to 1/3 at 0.125: MTF50 0.125, area 0.125 + 0.375 / 3 = 0.25
    test = ek.MtfCurve(f, np.where(f <= 0.125, 1.0, 1 / 3))
    assert ek.mtf50(test) == pytest.approx(0.125, rel=1e-3)
    assert ek.mtf_area(test) == pytest.approx(ek.mtf_area(ref), rel=1e-3)
    o50, oarea, o = ek.oiqe([test], [ref])
    assert o50 == pytest.approx(0.5, rel=1e-3)
    assert oarea == pytest.approx(1.0, rel=1e-3)
    assert o == pytest.approx(0.75, rel=1e-3)


def test_oiqe_mean_ratio_not_ratio_mean():
    o50, _, _ = ek.oiqe([_curve(0.1), _curve(0.3)], [_curve(0.2), _curve(0.2)])
    assert o50 == pytest.approx(1.0, abs=1e-9)


def test_oiqe_empty_raises():
    with pytest.raises(ValueError):
        ek.oiqe([], [_curve(0.1)])


def test_reference_curves_delta_is_sharp():
    d = np.zeros((5, 5))
    d[2, 2] = 1.0
    (c,) = ek.reference_curves([d])
    assert ek.mtf50(c) > 0.4


# -- checkerboard ground truth ----------------------------------------------------


def _edge_band(binary, width):
    dy = np.abs(np.diff(binary, axis=0, prepend=binary[:1]))
    dx = np.abs(np.diff(binary, axis=1, prepend=binary[:, :1]))
    edges = (dy + dx) > 0
    return ndimage.binary_dilation(edges, iterations=width)


def _junction_distance(size, square, angle_deg):
    """Distance of each pixel to the nearest corner where four cells meet."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) - (size - 1) / 2.0
    a = np.deg2rad(angle_deg)
    u = np.cos(a) * xx + np.sin(a) * yy
    v = -np.sin(a) * xx + np.cos(a) * yy
    return np.hypot(u - square * np.round(u / square), v - square * np.round(v / square))


def test_checker_gt_binary_unchanged():
    board = checkerboard(64, 8, angle_deg=10.0)
    gt, degenerate = ek.checker_gt(board)
    assert not degenerate
    # the sigma=1 pre-smooth only rounds the X-junction corners
    away = _junction_distance(64, 8, 10.0) > 1.5
    assert np.array_equal(gt[away], board[away])


def test_checker_gt_recovers_blurred():
    board = checkerboard(64, 8, angle_deg=10.0)
    blurred = ndimage.gaussian_filter(board, 2.0, mode="nearest")
    rgb = np.repeat((0.1 + 0.8 * blurred)[..., None], 3, axis=2)
    gt, degenerate = ek.checker_gt(rgb)
    assert not degenerate and gt.shape == rgb.shape
    far = ~_edge_band(board, 2)
    assert np.array_equal(gt[..., 0][far], board[far])
    assert set(np.unique(gt)) <= {0.0, 1.0}


def test_checker_gt_inverted_contrast_same_edges():
    board = checkerboard(64, 8, angle_deg=10.0)
    blurred = ndimage.gaussian_filter(board, 1.5, mode="nearest")
    gt, _ = ek.checker_gt(blurred)
    inv, _ = ek.checker_gt(1.0 - blurred)
    # X-junction centres sit at the threshold and may go either way
    away = _junction_distance(64, 8, 10.0) > 1.5
    assert np.array_equal(inv[away], 1.0 - gt[away])


def test_checker_gt_degenerate():
    flat = np.full((32, 32, 3), 0.4)
    out, degenerate = ek.checker_gt(flat)
    assert degenerate and np.array_equal(out, flat)
