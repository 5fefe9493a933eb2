import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from palsim.isp import (
    BayerImage, IspParams, SensorModel, add_noise, demosaic, forward_isp, gaussian_response, invert_isp, mosaic,
)
from palsim.optics import ConfigurationError

CCM = np.array([[1.6, -0.4, -0.2], [-0.3, 1.5, -0.2], [-0.1, -0.5, 1.6]])
PARAMS = IspParams(wb_gains=(1.9, 1.0, 1.6), ccm=CCM, gamma=2.2)


def test_invert_identity_and_gamma():
    x = np.random.default_rng(0).random((8, 8, 3))
    assert np.allclose(invert_isp(x, IspParams.identity()), x)
    gray = np.full((4, 4, 3), 0.5)
    assert np.allclose(invert_isp(gray, IspParams()), 0.5**2.2)
    assert 0.5**2.2 == pytest.approx(0.2176, abs=1e-4)


def test_roundtrip_random():
    rng = np.random.default_rng(1)
    # stay inside the gamut reachable through the CCM/WB pair
    lin = rng.uniform(0.05, 0.3, (16, 16, 3))
    y = forward_isp(lin, PARAMS, enable_mosaic_noise=False)
    assert np.allclose(forward_isp(invert_isp(y, PARAMS), PARAMS, enable_mosaic_noise=False), y, atol=1e-5)


@given(hnp.arrays(np.float64, (6, 6, 3), elements=st.floats(0.01, 0.99)))
def test_roundtrip_identity_matrices_property(x):
    p = IspParams(gamma=2.2, read_sigma=0, shot_gain=0)
    assert np.allclose(forward_isp(invert_isp(x, p), p, enable_mosaic_noise=False), x, atol=1e-5)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_gamma_monotone(a, b):
    p = IspParams()
    x = np.array([[[a, a, a], [b, b, b]]])
    lin = invert_isp(x, p)
    out = forward_isp(lin, p, enable_mosaic_noise=False)
    assert (lin[0, 0, 0] - lin[0, 1, 0]) * (a - b) >= 0
    assert (out[0, 0, 0] - out[0, 1, 0]) * (a - b) >= 0


def test_forward_trivial_cases():
    assert np.all(forward_isp(np.zeros((4, 4, 3)), IspParams(), enable_mosaic_noise=False) == 0)
    x = np.random.default_rng(2).uniform(-0.2, 1.2, (6, 6, 3))
    assert np.allclose(forward_isp(x, IspParams.identity(), enable_mosaic_noise=False), np.clip(x, 0, 1))


def test_forward_noise_deterministic():
    x = np.random.default_rng(3).random((16, 16, 3)) * 0.5
    a = forward_isp(x, IspParams(), seed=11)
    assert np.array_equal(a, forward_isp(x, IspParams(), seed=11))
    assert not np.array_equal(a, forward_isp(x, IspParams(), seed=12))


def test_singular_ccm():
    p = IspParams(ccm=np.ones((3, 3)))
    with pytest.raises(ConfigurationError):
        invert_isp(np.zeros((2, 2, 3)), p)
    with pytest.raises(ConfigurationError):
        forward_isp(np.zeros((2, 2, 3)), p)


def test_mosaic_pattern_and_odd_dims():
    raw = np.zeros((4, 4, 3))
    raw[..., 0], raw[..., 1], raw[..., 2] = 1.0, 2.0, 3.0
    b = mosaic(raw, "RGGB")
    assert b.data[0, 0] == 1.0 and b.data[0, 1] == 2.0 and b.data[1, 0] == 2.0 and b.data[1, 1] == 3.0
    assert mosaic(raw, "BGGR").data[0, 0] == 3.0
    assert mosaic(raw, "GRBG").data[0, 1] == 1.0
    with pytest.raises(ValueError):
        mosaic(np.zeros((3, 4, 3)))
    with pytest.raises(ValueError):
        demosaic(BayerImage(np.zeros((4, 5))))


@pytest.mark.parametrize("pattern", ["RGGB", "BGGR", "GRBG", "GBRG"])
def test_demosaic_constant_exact(pattern):
    x = np.ones((10, 12, 3)) * np.array([0.2, 0.5, 0.7])
    out = demosaic(mosaic(x, pattern))
    assert np.allclose(out[1:-1, 1:-1], x[1:-1, 1:-1], atol=1e-12)


@pytest.mark.parametrize("pattern", ["RGGB", "GBRG"])
def test_demosaic_linear_ramp(pattern):
    h, w = 12, 16
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    ramp = 0.01 * xx + 0.003 * yy + 0.1
    x = np.repeat(ramp[..., None], 3, axis=2)
    out = demosaic(mosaic(x, pattern))
    assert np.max(np.abs(out[2:-2, 2:-2, 1] - ramp[2:-2, 2:-2])) <= 1e-6
    assert np.max(np.abs(out[2:-2, 2:-2] - x[2:-2, 2:-2])) <= 1e-6


def test_noise_identity_and_statistics():
    b = BayerImage(np.full((1000, 1000), 0.25))
    assert np.array_equal(add_noise(b, 0, 0, 1).data, b.data)
    n = add_noise(b, 0.01, 0.0, 5).data
    assert 0.0095 <= n.std() <= 0.0105
    assert np.array_equal(n, add_noise(b, 0.01, 0.0, 5).data)
    shot = add_noise(b, 0.0, 0.001, 6).data
    assert shot.var() == pytest.approx(0.001 * 0.25, rel=0.02)
    assert add_noise(BayerImage(np.zeros((50, 50))), 0.1, 0, 1).data.min() >= 0


def test_params_validation():
    with pytest.raises(ValueError):
        IspParams(wb_gains=(1, 0, 1))
    with pytest.raises(ValueError):
        IspParams(bayer_pattern="RGBG")
    with pytest.raises(ValueError):
        SensorModel(1.0, (4, 4), np.ones((3, 2)))
    r = gaussian_response(np.linspace(400, 700, 31))
    assert r.shape == (3, 31) and np.allclose(r.sum(axis=1), 1)
    assert np.argmax(r[0]) > np.argmax(r[1]) > np.argmax(r[2])
