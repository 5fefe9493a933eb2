"""Spatially-variant aberration simulation on annular images.

The annulus between the blind radius and the outer radius is cut into
equal-width rings (one per sampled field) and equal azimuthal sectors.  Each
(ring, sector) patch is blurred with the ring's kernel rotated to the
sector-centre azimuth, which approximates a per-pixel rotated PSF.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import signal

from palsim.isp import SensorModel, forward_isp, invert_isp
from palsim.optics import ConfigurationError, PSFStack, rotate_kernel
from palsim.rng import keyed_bits

log = logging.getLogger(__name__)

SRAC_SCALE = 3
DEFAULT_SECTORS = 16


@dataclass
class AnnularImage:
    """RGB image in [0, 1] with the annulus geometry in pixel units."""

    pixels: np.ndarray
    center: tuple
    r_blind: float
    r_max: float

    def __post_init__(self):
        h, w = self.pixels.shape[:2]
        self.center = (float(self.center[0]), float(self.center[1]))
        if self.r_blind < 0 or self.r_max <= self.r_blind:
            raise ValueError(f"need 0 <= r_blind < r_max, got {self.r_blind}, {self.r_max}")
        if self.r_max > min(h, w) / 2.0 + 1e-9:
            raise ValueError(f"r_max={self.r_max} exceeds half the image size {min(h, w) / 2}")

    @property
    def shape(self) -> tuple:
        return self.pixels.shape

    @classmethod
    def centered(cls, pixels: np.ndarray, r_blind: float | None = None, r_max: float | None = None,
                 blind_ratio: float = 0.19) -> "AnnularImage":
        """Geometry centred on the image with r_max at half the short side."""
        h, w = pixels.shape[:2]
        r_max = min(h, w) / 2.0 if r_max is None else r_max
        r_blind = blind_ratio * r_max if r_blind is None else r_blind
        return cls(pixels, ((w - 1) / 2.0, (h - 1) / 2.0), r_blind, r_max)

    def with_pixels(self, pixels: np.ndarray) -> "AnnularImage":
        return replace(self, pixels=pixels)

    def scaled(self, factor: float, pixels: np.ndarray) -> "AnnularImage":
        """Same geometry on a grid downscaled by ``factor``."""
        cx, cy = self.center
        return AnnularImage(pixels, ((cx + 0.5) / factor - 0.5, (cy + 0.5) / factor - 0.5),
                            self.r_blind / factor, self.r_max / factor)

    def polar(self) -> tuple[np.ndarray, np.ndarray]:
        """Radius and azimuth (atan2 in image coordinates) of every pixel."""
        h, w = self.pixels.shape[:2]
        yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
        dx = xx - self.center[0]
        dy = yy - self.center[1]
        return np.hypot(dx, dy), np.arctan2(dy, dx)

    def normalized_field(self, r) -> np.ndarray:
        return (np.asarray(r) - self.r_blind) / (self.r_max - self.r_blind)

    def annulus_mask(self) -> np.ndarray:
        r, _ = self.polar()
        return (r >= self.r_blind) & (r <= self.r_max)


@dataclass(frozen=True)
class FoVPartition:
    ring_edges: np.ndarray

    @property
    def n_rings(self) -> int:
        return len(self.ring_edges) - 1

    @property
    def width(self) -> float:
        return float(self.ring_edges[1] - self.ring_edges[0])

    def centers(self) -> np.ndarray:
        return 0.5 * (self.ring_edges[:-1] + self.ring_edges[1:])

    def ring_of(self, r) -> np.ndarray:
        """Ring index per radius; -1 inside the blind area, outer pixels clamp to the last ring."""
        r = np.asarray(r, dtype=np.float64)
        idx = np.floor((r - self.ring_edges[0]) / self.width).astype(np.int64)
        idx = np.minimum(idx, self.n_rings - 1)
        return np.where(r < self.ring_edges[0], -1, idx)


def partition(image: AnnularImage, n_rings: int) -> FoVPartition:
    """Equal-width rings from the blind radius to the outer radius."""
    if n_rings < 1:
        raise ValueError("n_rings must be >= 1")
    if image.r_blind >= image.r_max:
        raise ValueError("r_blind must be smaller than r_max")
    return FoVPartition(np.linspace(image.r_blind, image.r_max, n_rings + 1))


def ring_fov_indices(stack: PSFStack, image: AnnularImage, part: FoVPartition) -> np.ndarray:
    return stack.fov_index(image.normalized_field(part.centers()))


def kernel_for_pixel(stack: PSFStack, pixel: tuple, image: AnnularImage, channel: int | None = None) -> np.ndarray:
    """Kernel of the field under ``pixel`` rotated to the pixel azimuth.

    Blind-area pixels get the innermost-field kernel unrotated.  Returns the
    per-channel stack (3, k, k) unless ``channel`` is given.
    """
    x, y = pixel
    dx, dy = x - image.center[0], y - image.center[1]
    r = math.hypot(dx, dy)
    if r < image.r_blind:
        ks = stack.per_channel[0]
        return ks if channel is None else ks[channel]
    i = int(stack.fov_index(image.normalized_field(r)))
    ang = math.atan2(dy, dx)
    ks = stack.per_channel[i]
    rot = np.stack([rotate_kernel(k, ang) for k in ks])
    return rot if channel is None else rot[channel]


# -- patch machinery -----------------------------------------------------------


@dataclass
class Patch:
    ring: int
    sector: int
    rows: np.ndarray
    cols: np.ndarray
    azimuth: float


def iter_patches(image: AnnularImage, part: FoVPartition, n_sectors: int = DEFAULT_SECTORS):
    """Yield every non-empty (ring, sector) patch of the annulus."""
    if n_sectors < 1:
        raise ValueError("n_sectors must be >= 1")
    r, phi = image.polar()
    ring = part.ring_of(r)
    sector = np.floor(np.mod(phi, 2 * np.pi) / (2 * np.pi / n_sectors)).astype(np.int64)
    sector = np.minimum(sector, n_sectors - 1)
    label = np.where(ring >= 0, ring * n_sectors + sector, -1).ravel()
    order = np.argsort(label, kind="stable")
    sorted_labels = label[order]
    starts = np.searchsorted(sorted_labels, np.arange(part.n_rings * n_sectors))
    ends = np.searchsorted(sorted_labels, np.arange(part.n_rings * n_sectors), side="right")
    w = image.pixels.shape[1]
    for lab, (s, e) in enumerate(zip(starts, ends)):
        if s == e:
            continue
        flat = order[s:e]
        sec = lab % n_sectors
        yield Patch(lab // n_sectors, sec, flat // w, flat % w, (sec + 0.5) * 2 * np.pi / n_sectors)


def patch_kernels(stack: PSFStack, fov: int, azimuth: float) -> np.ndarray:
    return np.stack([rotate_kernel(k, azimuth) for k in stack.per_channel[fov]])


def apply_patchwise(lin: np.ndarray, image: AnnularImage, stack: PSFStack, part: FoVPartition,
                    n_sectors: int, patch_op, inverse: bool = False, context: int = 1) -> np.ndarray:
    """Run ``patch_op(region, kernel)`` per patch and channel and scatter the results.

    ``region`` is the patch bounding box plus a margin of ``context`` kernel
    radii on every side (edge replicated at the image border).  ``patch_op``
    may trim its result symmetrically; the patch pixels are read back from
    the centre.  The field illumination is applied to the output, or divided
    out when ``inverse`` is set.
    """
    out = lin.copy()
    fov_of_ring = ring_fov_indices(stack, image, part)
    pad = context * (stack.max_kernel_size // 2)
    padded = np.pad(lin, ((pad, pad), (pad, pad), (0, 0)), mode="edge")
    for p in iter_patches(image, part, n_sectors):
        fov = int(fov_of_ring[p.ring])
        ks = patch_kernels(stack, fov, p.azimuth)
        m = context * (ks.shape[1] // 2)
        y0, y1 = p.rows.min(), p.rows.max()
        x0, x1 = p.cols.min(), p.cols.max()
        gain = stack.illumination[fov]
        if inverse:
            gain = 1.0 / gain
        for c in range(lin.shape[2]):
            region = padded[y0 + pad - m:y1 + pad + m + 1, x0 + pad - m:x1 + pad + m + 1, c]
            res = patch_op(region, ks[c])
            off = m - (region.shape[0] - res.shape[0]) // 2
            out[p.rows, p.cols, c] = res[p.rows - y0 + off, p.cols - x0 + off] * gain
    return out


def _convolve_valid(region: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    if kernel.shape[0] == 1:
        return region * kernel[0, 0]
    return signal.fftconvolve(region, kernel, mode="valid")


def blur_linear(lin: np.ndarray, image: AnnularImage, stack: PSFStack, part: FoVPartition,
                n_sectors: int = DEFAULT_SECTORS) -> np.ndarray:
    """Patch-wise convolution of a linear RGB image; the blind area passes through."""
    return apply_patchwise(lin, image, stack, part, n_sectors, _convolve_valid)


# -- resampling ----------------------------------------------------------------


def _cubic(x: np.ndarray, a: float = -0.5) -> np.ndarray:
    x = np.abs(x)
    return np.where(x <= 1, (a + 2) * x**3 - (a + 3) * x**2 + 1,
                    np.where(x < 2, a * x**3 - 5 * a * x**2 + 8 * a * x - 4 * a, 0.0))


def _bicubic_matrix(n_in: int, s: int) -> np.ndarray:
    n_out = n_in // s
    centers = (np.arange(n_out) + 0.5) * s - 0.5
    support = 2 * s
    taps = np.arange(-support, support + 1)
    m = np.zeros((n_out, n_in))
    for o, c in enumerate(centers):
        idx = np.floor(c).astype(int) + taps
        wts = _cubic((idx - c) / s)
        wts = wts / wts.sum()
        np.add.at(m[o], np.clip(idx, 0, n_in - 1), wts)
    return m


def downsample_bicubic(img: np.ndarray, s: int) -> np.ndarray:
    """Anti-aliased Catmull-Rom downsampling by an integer factor."""
    h, w = img.shape[:2]
    if s < 1 or h % s or w % s:
        raise ValueError(f"image {h}x{w} not divisible by {s}")
    if s == 1:
        return img.copy()
    my, mx = _bicubic_matrix(h, s), _bicubic_matrix(w, s)
    out = np.tensordot(my, img, axes=(1, 0))
    out = np.tensordot(mx, out, axes=(1, 1)).swapaxes(0, 1)
    return out


# -- full degradation ----------------------------------------------------------


def check_pitch(stack: PSFStack, sensor: SensorModel, mode: str = "AC"):
    pitch = simulation_pitch(sensor, mode)
    if not math.isclose(stack.pixel_size_um, pitch, rel_tol=1e-6):
        raise ConfigurationError(
            f"PSF stack pitch {stack.pixel_size_um} um does not match the {mode} simulation pitch {pitch} um")


def degrade(hq: AnnularImage, stack: PSFStack, sensor: SensorModel, part: FoVPartition, seed: int = 0,
            mode: str = "AC", noise: bool = True, n_sectors: int = DEFAULT_SECTORS) -> AnnularImage:
    """Simulate a capture of ``hq`` through the lens, sensor and ISP."""
    mode = mode.upper()
    if mode not in ("AC", "SRAC"):
        raise ValueError(f"mode must be AC or SRAC, got {mode}")
    check_pitch(stack, sensor, mode)
    raw = invert_isp(hq.pixels, sensor.isp)
    blurred = blur_linear(raw, hq, stack, part, n_sectors)
    out_geom = hq
    if mode == "SRAC":
        blurred = downsample_bicubic(blurred, SRAC_SCALE)
        out_geom = hq.scaled(SRAC_SCALE, blurred)
    h, w = blurred.shape[:2]
    use_cfa = noise and h % 2 == 0 and w % 2 == 0
    if noise and not use_cfa:
        raise ValueError(f"mosaic needs even output dimensions, got {h}x{w}")
    out = forward_isp(blurred, sensor.isp, seed=seed, enable_mosaic_noise=use_cfa)
    return out_geom.with_pixels(out)


def simulation_pitch(sensor: SensorModel, mode: str) -> float:
    """Pitch at which kernels act: the sensor pitch for AC, a third of it for SR&AC."""
    return sensor.pixel_size_um / (SRAC_SCALE if mode.upper() == "SRAC" else 1)


# -- dataset generation --------------------------------------------------------


IMAGE_SUFFIXES = (".png", ".PNG")


def load_annular(path) -> AnnularImage:
    """Read a PNG plus its optional ``<stem>.json`` geometry sidecar."""
    from palsim import io

    path = Path(path)
    pixels = io.read_png(path)
    side = path.with_suffix(".json")
    if side.exists():
        g = io.read_json(side)
        return AnnularImage(pixels, tuple(g["center"]), float(g["r_blind"]), float(g["r_max"]))
    return AnnularImage.centered(pixels)


def geometry_dict(img: AnnularImage) -> dict:
    return {"center": list(img.center), "r_blind": img.r_blind, "r_max": img.r_max}


def sub_seed(seed: int, *keys) -> int:
    return int(keyed_bits(seed, *keys) >> np.uint64(33))


def make_dataset(hq_dir, prescription, sensor: SensorModel, n_virtual: int, range_fraction: float, seed: int,
                 mode: str = "AC", out_dir=None, pupil_samples: int = 512, n_rings: int | None = None,
                 n_sectors: int = DEFAULT_SECTORS, noise: bool = True, threads: int = 1, bits: int = 8) -> dict:
    """Degrade every HQ image under ``n_virtual`` perturbed copies of a prescription.

    Writes ``gt/``, ``v<k>/lq/`` and ``v<k>/stack.bin`` under ``out_dir`` and
    returns the manifest (also written as ``manifest.json``).
    """
    from palsim import io
    from palsim.optics import perturb, synthesize_psf_stack

    hq_dir, out_dir = Path(hq_dir), Path(out_dir)
    if n_virtual < 1:
        raise ValueError("n_virtual must be >= 1")
    files = sorted(p for p in hq_dir.iterdir() if p.suffix in IMAGE_SUFFIXES) if hq_dir.is_dir() else []
    images = []
    for f in files:
        try:
            images.append((f.stem, load_annular(f)))
        except (io.DataError, ValueError, KeyError) as exc:
            log.warning("skipping %s: %s", f, exc)
    if not images:
        raise io.DataError(f"no readable HQ images in {hq_dir}")

    mode = mode.upper()
    pitch_sensor = replace(sensor, pixel_size_um=simulation_pitch(sensor, mode))
    entries = []
    for stem, img in images:
        if mode == "SRAC":
            h, w = img.pixels.shape[:2]
            h, w = h - h % (2 * SRAC_SCALE), w - w % (2 * SRAC_SCALE)
            img = img.with_pixels(img.pixels[:h, :w])
        gt_path = out_dir / "gt" / f"{stem}.png"
        io.write_png(gt_path, img.pixels, bits)
        io.atomic_write_text(gt_path.with_suffix(".json"), io.dump_json(geometry_dict(img)))
        entries.append((stem, img))

    virtual = []
    for v in range(n_virtual):
        v_seed = seed + v
        presc = perturb(prescription, range_fraction, v_seed)
        stack = synthesize_psf_stack(presc, pitch_sensor, pupil_samples=pupil_samples, threads=threads)
        vdir = out_dir / f"v{v:02d}"
        io.save_psf_stack(vdir / "stack.bin", stack)
        outputs = []
        for i, (stem, img) in enumerate(entries):
            part = partition(img, n_rings or stack.n_fov)
            lq = degrade(img, stack, sensor, part, seed=sub_seed(v_seed, i), mode=mode, noise=noise,
                         n_sectors=n_sectors)
            lq_path = vdir / "lq" / f"{stem}.png"
            io.write_png(lq_path, lq.pixels, bits)
            io.atomic_write_text(lq_path.with_suffix(".json"), io.dump_json(geometry_dict(lq)))
            outputs.append({"image": stem, "path": str(lq_path.relative_to(out_dir)),
                            "sha256": io.sha256_file(lq_path)})
        virtual.append({"index": v, "seed": v_seed,
                        "stack": str((vdir / "stack.bin").relative_to(out_dir)),
                        "stack_sha256": io.sha256_file(vdir / "stack.bin"), "outputs": outputs})

    manifest = {
        "kind": "dataset",
        "mode": mode,
        "seed": seed,
        "n_virtual": n_virtual,
        "range_fraction": range_fraction,
        "seeds": [v["seed"] for v in virtual],
        "pupil_samples": pupil_samples,
        "n_sectors": n_sectors,
        "noise": noise,
        "gt": [{"image": s, "sha256": io.sha256_file(out_dir / "gt" / f"{s}.png")} for s, _ in entries],
        "virtual": virtual,
    }
    io.atomic_write_text(out_dir / "manifest.json", io.dump_json(manifest))
    return manifest
