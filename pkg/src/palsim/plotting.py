"""PNG figures with their underlying CSV written side by side."""

from __future__ import annotations

import csv
import io as _io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from palsim.evalkit import MtfCurve  # noqa: E402
from palsim.io import DataError, atomic_write_bytes, atomic_write_text  # noqa: E402
from palsim.optics import PSFStack  # noqa: E402

# fixed metadata keeps PNG bytes stable across runs
_PNG_META = {"Software": None}


def _save_figure(fig, path):
    buf = _io.BytesIO()
    fig.savefig(buf, format="png", dpi=100, metadata=_PNG_META)
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def _csv_text(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_curves_csv(path, curves: list) -> None:
    """Long format: label, frequency, mtf."""
    rows = [(c.label, f"{f:.6g}", f"{v:.6g}") for c in curves for f, v in zip(c.frequencies, c.values)]
    atomic_write_text(path, _csv_text(["label", "frequency", "mtf"], rows))


def read_curves_csv(path) -> list:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing curve file {path}")
    data: dict = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"label", "frequency", "mtf"} <= set(reader.fieldnames):
            raise DataError(f"{path}: expected columns label, frequency, mtf")
        for row in reader:
            try:
                data.setdefault(row["label"], []).append((float(row["frequency"]), float(row["mtf"])))
            except ValueError as exc:
                raise DataError(f"{path}: bad number: {exc}") from exc
    if not data:
        raise DataError(f"{path}: no curves")
    curves = []
    for label, pts in data.items():
        pts.sort()
        try:
            curves.append(MtfCurve(np.array([p[0] for p in pts]), np.array([p[1] for p in pts]), label))
        except ValueError as exc:
            raise DataError(f"{path}: curve {label!r}: {exc}") from exc
    return curves


def plot_mtf(curves: list, png_path, csv_path=None, analytic: list | None = None, title: str = "MTF"):
    """Plot measured curves (solid) and optional analytic curves (dashed)."""
    if not curves:
        raise DataError("no curves to plot")
    analytic = analytic or []
    fig, ax = plt.subplots(figsize=(6, 4))
    for c in curves:
        ax.plot(c.frequencies, c.values, label=c.label or "measured")
    for c in analytic:
        ax.plot(c.frequencies, c.values, "--", label=c.label or "analytic")
    ax.axhline(0.5, color="0.7", lw=0.8)
    ax.set_xlim(0, 0.5)
    ax.set_ylim(0, 1.1)
    ax.set_xlabel("spatial frequency (cycles/pixel)")
    ax.set_ylabel("MTF")
    ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    _save_figure(fig, png_path)
    csv_path = Path(png_path).with_suffix(".csv") if csv_path is None else csv_path
    write_curves_csv(csv_path, list(curves) + list(analytic))
    return csv_path


def psf_grid(stack: PSFStack, fov_indices, channel: int = 1) -> list:
    """Per-cell kernels, each scaled to its own peak, padded to the stack maximum."""
    kmax = stack.max_kernel_size
    cells = []
    for i in fov_indices:
        k = stack.per_channel[i][channel]
        off = (kmax - k.shape[0]) // 2
        cell = np.zeros((kmax, kmax))
        cell[off:off + k.shape[0], off:off + k.shape[0]] = k / k.max()
        cells.append(cell)
    return cells


def plot_psf(stack: PSFStack, png_path, csv_path=None, n_cells: int = 8, channel: int = 1):
    """Grid of kernels at evenly spaced fields, plus a per-kernel summary CSV."""
    if stack.n_fov < 1:
        raise DataError("empty PSF stack")
    n = min(n_cells, stack.n_fov)
    idx = np.unique(np.round(np.linspace(0, stack.n_fov - 1, n)).astype(int))
    cells = psf_grid(stack, idx, channel)
    cols = min(4, len(idx))
    rows = -(-len(idx) // cols)
    fig, axes = plt.subplots(rows, cols, figsize=(2.2 * cols, 2.2 * rows), squeeze=False)
    for ax in axes.ravel():
        ax.axis("off")
    for ax, i, cell in zip(axes.ravel(), idx, cells):
        ax.imshow(cell, cmap="inferno", interpolation="nearest", vmin=0, vmax=1)
        ax.set_title(f"fov {stack.fovs[i]:.2f}", fontsize=8)
    fig.tight_layout()
    _save_figure(fig, png_path)

    table = []
    for i in idx:
        k = stack.per_channel[i][channel]
        yy, xx = np.indices(k.shape)
        c = k.shape[0] // 2
        table.append((int(i), f"{stack.fovs[i]:.6g}", int(stack.kernel_sizes[i]), f"{k.sum():.9f}",
                      f"{k.max():.6g}", f"{(k * xx).sum() - c:.6g}", f"{(k * yy).sum() - c:.6g}"))
    csv_path = Path(png_path).with_suffix(".csv") if csv_path is None else csv_path
    atomic_write_text(csv_path, _csv_text(
        ["fov_index", "fov", "kernel_size", "sum", "peak", "centroid_dx", "centroid_dy"], table))
    return cells
