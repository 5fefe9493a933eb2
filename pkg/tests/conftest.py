import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from palsim.isp import IspParams, SensorModel, gaussian_response
from palsim.optics import synthesize_psf_stack
from palsim.presets import synthetic_prescription

settings.register_profile("palsim", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("palsim")


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    c = size // 2
    y, x = np.mgrid[-c:c + 1, -c:c + 1]
    k = np.exp(-(x**2 + y**2) / (2 * sigma**2))
    return k / k.sum()


@pytest.fixture(scope="session")
def small_prescription():
    return synthetic_prescription("p1", n_lambda=3, n_fov=4)


@pytest.fixture(scope="session")
def identity_sensor(small_prescription):
    lam = small_prescription.zernike.lambdas
    return SensorModel(1.34, (256, 256), gaussian_response(lam), IspParams.identity())


@pytest.fixture(scope="session")
def small_stack(small_prescription, identity_sensor):
    return synthesize_psf_stack(small_prescription, identity_sensor, pupil_samples=256)


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance criteria table when that module ran."""
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, title, detail = results[n]
        terminalreporter.write_line(f"C{n:<2} {'PASS' if ok else 'FAIL'}  {title}  [{detail}]")
