"""Synthetic lens and sensor presets.

The real prototype Zernike tables are not available, so the presets build
smooth field- and wavelength-dependent aberrations whose geometric ray spread
roughly fills the published average spot radii.
"""

from __future__ import annotations

import numpy as np

from palsim.isp import IspParams, SensorModel, gaussian_response
from palsim.optics import OpticalPrescription, ZernikeGrid

# average geometric spot radius (um) of the two prototypes
SPOT_RADIUS_UM = {"p1": 13.78, "p2": 46.26}
# camera pitch (um) for the AC and SR&AC pipelines
PIXEL_SIZE_UM = {"ac": 1.34, "srac": 4.0}
RESOLUTION = {"ac": (3152, 3152), "srac": (992, 992)}

EXIT_PUPIL_MM = 10.0
PUPIL_RADIUS_MM = 2.0


def synthetic_prescription(lens: str = "p1", n_lambda: int = 31, n_fov: int = 128, n_poly: int = 37,
                           illumination_falloff: float = 0.2) -> OpticalPrescription:
    lens = lens.lower()
    if lens not in SPOT_RADIUS_UM:
        raise ValueError(f"unknown lens preset {lens!r}; choose from {sorted(SPOT_RADIUS_UM)}")
    lambdas = np.linspace(400.0, 700.0, n_lambda) if n_lambda > 1 else np.array([550.0])
    fovs = np.linspace(0.0, 1.0, n_fov) if n_fov > 1 else np.array([1.0])
    spot = SPOT_RADIUS_UM[lens] * (0.6 + 0.8 * fovs)

    f_number = EXIT_PUPIL_MM / (2 * PUPIL_RADIUS_MM)
    # wavefront slope (waves per unit pupil radius) whose rays land at 70% of the spot radius
    slope = 0.7 * spot / (2.0 * f_number * 0.55)
    coeffs = np.zeros((n_lambda, n_fov, n_poly))
    for li, lam in enumerate(lambdas):
        to_waves = 550.0 / lam
        chroma = 1.0 + 0.4 * (lam - 550.0) / 150.0
        terms = {
            4: 0.35 * slope / 6.93 * chroma,
            6: 0.25 * fovs * slope / 4.90,
            8: 0.20 * fovs * slope / 19.8,
            11: 0.15 * slope / 26.8,
            12: 0.05 * fovs**2 * slope / 15.5,
            16: 0.03 * fovs * slope / 60.0,
        }
        for j, c in terms.items():
            if j <= n_poly:
                coeffs[li, :, j - 1] = c * to_waves
    grid = ZernikeGrid(coeffs, lambdas, fovs)
    illum = 1.0 - illumination_falloff * fovs**2
    return OpticalPrescription(grid, spot, illum, EXIT_PUPIL_MM, PUPIL_RADIUS_MM)


def sensor_preset(pipeline: str = "ac", lambdas=None, isp: IspParams | None = None) -> SensorModel:
    pipeline = pipeline.lower()
    if pipeline not in PIXEL_SIZE_UM:
        raise ValueError(f"unknown pipeline {pipeline!r}")
    lambdas = np.linspace(400.0, 700.0, 31) if lambdas is None else lambdas
    return SensorModel(PIXEL_SIZE_UM[pipeline], RESOLUTION[pipeline], gaussian_response(lambdas),
                       isp or IspParams())
