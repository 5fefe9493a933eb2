"""File formats: header+f32 tensor container, JSON configs, PNG images, manifests.

Tensor files start with one line of JSON (terminated by ``\\n``) describing
the payload, followed by raw little-endian float32 values in row-major order.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import cv2
import numpy as np

from palsim.isp import IspParams, SensorModel, gaussian_response
from palsim.optics import OpticalPrescription, PSFStack, ZernikeGrid

DTYPE = "f32le"


class DataError(ValueError):
    """A file is missing, unreadable or malformed."""


def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


# -- tensor container ----------------------------------------------------------


def write_tensor(path, header: dict, arrays):
    """Write ``arrays`` (concatenated, flattened) under a one-line JSON header."""
    flat = [np.ascontiguousarray(a, dtype="<f4").ravel() for a in arrays]
    payload = np.concatenate(flat) if flat else np.zeros(0, "<f4")
    header = dict(header, dtype=DTYPE, count=int(payload.size))
    line = json.dumps(header, sort_keys=True, separators=(",", ":"))
    if "\n" in line:
        raise ValueError("header must serialize to a single line")
    atomic_write_bytes(path, line.encode("utf-8") + b"\n" + payload.tobytes())


def read_tensor(path) -> tuple[dict, np.ndarray]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    nl = raw.find(b"\n")
    if nl < 0:
        raise DataError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:nl])
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: bad header: {exc}") from exc
    if header.get("dtype") != DTYPE:
        raise DataError(f"{path}: unsupported dtype {header.get('dtype')!r}")
    data = np.frombuffer(raw[nl + 1:], dtype="<f4")
    if data.size != header.get("count", data.size):
        raise DataError(f"{path}: expected {header['count']} values, found {data.size}")
    return header, data.astype(np.float64)


def save_psf_stack(path, stack: PSFStack):
    header = {
        "kind": "psf_stack",
        "dims": [int(stack.n_fov), int(len(stack.lambdas))],
        "layout": "per fov: per_lambda[n_lambda,k,k] then per_channel[3,k,k]",
        "fovs": [float(f) for f in stack.fovs],
        "lambdas": [float(v) for v in stack.lambdas],
        "kernel_sizes": [int(k) for k in stack.kernel_sizes],
        "illumination": [float(v) for v in stack.illumination],
        "pixel_size_um": float(stack.pixel_size_um),
        "meta": stack.meta,
    }
    arrays = []
    for pl, pc in zip(stack.per_lambda, stack.per_channel):
        arrays += [pl, pc]
    write_tensor(path, header, arrays)


def load_psf_stack(path) -> PSFStack:
    header, data = read_tensor(path)
    if header.get("kind") != "psf_stack":
        raise DataError(f"{path}: not a PSF stack")
    n_lam = header["dims"][1]
    per_lambda, per_channel = [], []
    pos = 0
    for k in header["kernel_sizes"]:
        n = n_lam * k * k
        per_lambda.append(data[pos:pos + n].reshape(n_lam, k, k))
        pos += n
        per_channel.append(data[pos:pos + 3 * k * k].reshape(3, k, k))
        pos += 3 * k * k
    if pos != data.size:
        raise DataError(f"{path}: payload size does not match kernel sizes")
    return PSFStack(per_lambda, per_channel, np.array(header["kernel_sizes"]), np.array(header["fovs"]),
                    np.array(header["lambdas"]), np.array(header["illumination"]),
                    header["pixel_size_um"], header.get("meta", {}))


# -- configs -------------------------------------------------------------------


def prescription_to_dict(p: OpticalPrescription) -> dict:
    g = p.zernike
    return {
        "coefficient_units": "waves",
        "zernike_convention": "noll-standard",
        "lambdas_nm": g.lambdas.tolist(),
        "fovs": g.fovs.tolist(),
        "coeffs": g.coeffs.tolist(),
        "spot_radius_um": p.spot_radius_um.tolist(),
        "illumination": p.illumination.tolist(),
        "exit_pupil_distance_mm": p.exit_pupil_distance_mm,
        "pupil_radius_mm": p.pupil_radius_mm,
    }


def prescription_from_dict(d: dict) -> OpticalPrescription:
    units = d.get("coefficient_units", "waves")
    if units != "waves":
        raise DataError(f"unsupported coefficient units {units!r}; expected waves")
    try:
        grid = ZernikeGrid(np.array(d["coeffs"]), np.array(d["lambdas_nm"]), np.array(d["fovs"]))
        return OpticalPrescription(grid, np.array(d["spot_radius_um"]), np.array(d.get("illumination", 1.0)),
                                   float(d["exit_pupil_distance_mm"]), float(d["pupil_radius_mm"]))
    except KeyError as exc:
        raise DataError(f"prescription is missing field {exc}") from exc


def save_prescription(path, p: OpticalPrescription):
    atomic_write_text(path, dump_json(prescription_to_dict(p)))


def load_prescription(path) -> OpticalPrescription:
    return prescription_from_dict(read_json(path))


def isp_to_dict(p: IspParams) -> dict:
    return {"wb_gains": list(p.wb_gains), "ccm": p.ccm.tolist(), "gamma": p.gamma,
            "bayer_pattern": p.bayer_pattern, "read_sigma": p.read_sigma, "shot_gain": p.shot_gain}


def sensor_to_dict(s: SensorModel) -> dict:
    return {"pixel_size_um": s.pixel_size_um, "resolution": list(s.resolution),
            "response": s.response.tolist(), "isp": isp_to_dict(s.isp)}


def sensor_from_dict(d: dict, lambdas=None) -> SensorModel:
    """Build a sensor; ``response`` may be a 3 x n_lambda list or ``"gaussian"``."""
    resp = d.get("response", "gaussian")
    if isinstance(resp, str):
        if resp != "gaussian" or lambdas is None:
            raise DataError("a named response needs the prescription wavelengths")
        resp = gaussian_response(lambdas)
    isp = IspParams(**d.get("isp", {}))
    try:
        return SensorModel(float(d["pixel_size_um"]), tuple(d.get("resolution", (0, 0))), np.array(resp), isp)
    except KeyError as exc:
        raise DataError(f"sensor profile is missing field {exc}") from exc


def save_sensor(path, s: SensorModel):
    atomic_write_text(path, dump_json(sensor_to_dict(s)))


def load_sensor(path, lambdas=None) -> SensorModel:
    return sensor_from_dict(read_json(path), lambdas)


# -- images --------------------------------------------------------------------


def read_png(path) -> np.ndarray:
    """RGB image as float64 in [0, 1] (8- or 16-bit input)."""
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise DataError(f"cannot read image {path}")
    scale = 65535.0 if img.dtype == np.uint16 else 255.0
    img = img.astype(np.float64) / scale
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    elif img.shape[2] == 4:
        img = img[..., :3]
    return img[..., ::-1].copy()


def write_png(path, img: np.ndarray, bits: int = 8):
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    top = 255 if bits == 8 else 65535
    q = np.round(np.clip(img, 0.0, 1.0) * top).astype(np.uint8 if bits == 8 else np.uint16)
    if q.ndim == 3:
        q = q[..., ::-1]
    ok, buf = cv2.imencode(".png", q)
    if not ok:
        raise DataError(f"PNG encoding failed for {path}")
    atomic_write_bytes(path, buf.tobytes())


# -- PSF maps and network weights ------------------------------------------------


def save_psf_map(path, data: np.ndarray, k_prime: int, meta: dict | None = None):
    write_tensor(path, {"kind": "psf_map", "shape": list(data.shape), "k_prime": int(k_prime),
                        "meta": meta or {}}, [data])


def load_psf_map(path):
    from palsim.psfmap import PSFMap

    header, data = read_tensor(path)
    if header.get("kind") != "psf_map":
        raise DataError(f"{path}: not a PSF map")
    return PSFMap(data.reshape(header["shape"]), int(header["k_prime"]))


def save_weights(path, cfg, weights: dict, seed: int | None = None):
    """Header with config, seed and layer manifest, then one f32 blob per layer."""
    from palsim.psfnet.model import weight_spec

    names = [name for name, _, _ in weight_spec(cfg)]
    missing = [n for n in names if n not in weights]
    if missing:
        raise ValueError(f"weights are missing {missing[:3]}")
    layers = [{"name": n, "shape": list(weights[n].shape)} for n in names]
    write_tensor(path, {"kind": "part_weights", "config": cfg.to_dict(), "seed": seed, "layers": layers},
                 [weights[n] for n in names])


def load_weights(path):
    """Returns ``(config, weights, seed)``."""
    from palsim.psfnet.model import PartConfig, weight_spec

    header, data = read_tensor(path)
    if header.get("kind") != "part_weights":
        raise DataError(f"{path}: not a weight file")
    try:
        cfg = PartConfig(**header["config"])
    except (TypeError, ValueError) as exc:
        raise DataError(f"{path}: bad config: {exc}") from exc
    expected = {n: tuple(s) for n, s, _ in weight_spec(cfg)}
    weights, pos = {}, 0
    for layer in header["layers"]:
        shape = tuple(layer["shape"])
        if expected.get(layer["name"]) != shape:
            raise DataError(f"{path}: layer {layer['name']} has shape {shape}, config expects "
                            f"{expected.get(layer['name'])}")
        n = int(np.prod(shape))
        weights[layer["name"]] = data[pos:pos + n].reshape(shape)
        pos += n
    if pos != data.size or set(weights) != set(expected):
        raise DataError(f"{path}: layer manifest does not match the payload or config")
    return cfg, weights, header.get("seed")
