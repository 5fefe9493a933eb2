"""``palsim`` command line: PSF synthesis, degradation, recovery, evaluation and plots.

Exit codes: 0 success, 1 usage error, 2 data or configuration error.
Every subcommand accepts ``--config FILE`` (JSON whose keys are flag names);
explicit flags override the file.  Each run writes a manifest recording the
resolved arguments, their hash, the seed and library versions.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io as _io
import json
import logging
import os
import platform
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np
import scipy

import palsim
from palsim import evalkit, io, optics, plotting, presets, psfmap, simulate, wiener
from palsim.isp import IspParams, SensorModel, gaussian_response
from palsim.psfnet import PartConfig, init_weights, part_forward

log = logging.getLogger("palsim")

THREADS_ENV = "PALSIM_THREADS"
PNG_SUFFIXES = (".png",)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1 instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


# -- image and manifest helpers ------------------------------------------------


def load_image(path) -> simulate.AnnularImage:
    """PNG (with optional geometry sidecar) or an ``image`` tensor file."""
    path = Path(path)
    if not path.exists():
        raise io.DataError(f"missing image {path}")
    if path.suffix.lower() in PNG_SUFFIXES:
        return simulate.load_annular(path)
    header, data = io.read_tensor(path)
    if header.get("kind") != "image":
        raise io.DataError(f"{path}: not an image tensor")
    g = header["geometry"]
    return simulate.AnnularImage(data.reshape(header["shape"]), tuple(g["center"]), g["r_blind"], g["r_max"])


def save_image(path, img: simulate.AnnularImage, bits: int = 8):
    path = Path(path)
    if path.suffix.lower() in PNG_SUFFIXES:
        io.write_png(path, img.pixels, bits)
        io.atomic_write_text(path.with_suffix(".json"), io.dump_json(simulate.geometry_dict(img)))
    else:
        io.write_tensor(path, {"kind": "image", "shape": list(img.pixels.shape),
                               "geometry": simulate.geometry_dict(img)}, [img.pixels])


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def versions() -> dict:
    return {"palsim": palsim.__version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def write_manifest(path, args: argparse.Namespace, outputs: list, extra: dict | None = None) -> dict:
    params = {k: _jsonable(v) for k, v in sorted(vars(args).items())
              if k not in ("func", "config", "threads", "verbose")}
    config_hash = hashlib.sha256(json.dumps(params, sort_keys=True).encode()).hexdigest()
    manifest = {
        "command": f"{args.group} {args.action}",
        "params": params,
        "config_sha256": config_hash,
        "seed": params.get("seed"),
        "versions": versions(),
        "outputs": {str(Path(p).name): io.sha256_file(p) for p in outputs},
    }
    if extra:
        manifest.update(extra)
    io.atomic_write_text(path, io.dump_json(manifest))
    return manifest


def _manifest_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".manifest.json")


def _csv_text(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _sensor(args, stack: optics.PSFStack | None, lambdas=None) -> SensorModel:
    """Sensor from ``--sensor`` or, failing that, an identity-ISP sensor matching the stack pitch."""
    if getattr(args, "sensor", None):
        lam = lambdas if lambdas is not None else (stack.lambdas if stack is not None else None)
        return io.load_sensor(args.sensor, lam)
    if stack is None:
        raise UsageError("--sensor is required")
    factor = simulate.SRAC_SCALE if args.mode == "srac" else 1
    return SensorModel(stack.pixel_size_um * factor, (0, 0), gaussian_response(stack.lambdas),
                       IspParams.identity())


def _require_seed(args, why: str):
    if args.seed is None:
        raise UsageError(f"--seed is required {why}")


# -- psf -----------------------------------------------------------------------


def cmd_psf_preset(args):
    presc = presets.synthetic_prescription(args.lens, args.n_lambda, args.n_fov, args.n_poly)
    sensor = presets.sensor_preset(args.mode, presc.zernike.lambdas)
    out = Path(args.out)
    io.save_prescription(out / "prescription.json", presc)
    io.save_sensor(out / "sensor.json", sensor)
    write_manifest(out / "preset.manifest.json", args, [out / "prescription.json", out / "sensor.json"])


def cmd_psf_synth(args):
    presc = io.load_prescription(args.prescription)
    sensor = io.load_sensor(args.sensor, presc.zernike.lambdas)
    pitch = simulate.simulation_pitch(sensor, args.mode)
    stack = optics.synthesize_psf_stack(presc, replace(sensor, pixel_size_um=pitch), args.pupil_samples,
                                        args.pad, args.threads)
    stack.meta["mode"] = args.mode.upper()
    io.save_psf_stack(args.out, stack)
    write_manifest(_manifest_path(args.out), args, [args.out],
                   {"kernel_sizes": [int(k) for k in stack.kernel_sizes], "pixel_size_um": pitch})


def cmd_psf_perturb(args):
    _require_seed(args, "for perturbation")
    presc = optics.perturb(io.load_prescription(args.prescription), args.range, args.seed)
    io.save_prescription(args.out, presc)
    write_manifest(_manifest_path(args.out), args, [args.out])


# -- sim -----------------------------------------------------------------------


def cmd_sim_run(args):
    if args.noise:
        _require_seed(args, "when noise is enabled (or pass --no-noise)")
    img = load_image(args.image)
    stack = io.load_psf_stack(args.stack)
    sensor = _sensor(args, stack)
    part = simulate.partition(img, args.rings or stack.n_fov)
    lq = simulate.degrade(img, stack, sensor, part, seed=args.seed or 0, mode=args.mode, noise=args.noise,
                          n_sectors=args.sectors)
    save_image(args.out, lq, args.bits)
    write_manifest(_manifest_path(args.out), args, [args.out])


def cmd_sim_dataset(args):
    _require_seed(args, "for dataset generation")
    if args.prescription:
        presc = io.load_prescription(args.prescription)
    else:
        presc = presets.synthetic_prescription(args.lens, args.n_lambda, args.n_fov)
    lam = presc.zernike.lambdas
    sensor = io.load_sensor(args.sensor, lam) if args.sensor else presets.sensor_preset(args.mode, lam)
    out = Path(args.out)
    simulate.make_dataset(args.hq, presc, sensor, args.n_virtual, args.range, args.seed, args.mode, out,
                          pupil_samples=args.pupil_samples, n_rings=args.rings, n_sectors=args.sectors,
                          noise=args.noise, threads=args.threads, bits=args.bits)
    write_manifest(out / "run.json", args, [out / "manifest.json"])


# -- psfmap --------------------------------------------------------------------


def _build_map(stack, img, k_prime, channel, downscale) -> psfmap.PSFMap:
    m = psfmap.build(stack, img, k_prime, channel)
    return psfmap.downscale_map(m, downscale) if downscale > 1 else m


def _map_downscale(args) -> int:
    if args.downscale is not None:
        return args.downscale
    return PartConfig.unshuffle if args.mode == "ac" else 1


def cmd_psfmap_build(args):
    stack = io.load_psf_stack(args.stack)
    img = load_image(args.image)
    m = _build_map(stack, img, args.k_prime, args.channel, _map_downscale(args))
    io.save_psf_map(args.out, m.data, m.k_prime, {"channel": args.channel})
    write_manifest(_manifest_path(args.out), args, [args.out], {"shape": list(m.data.shape)})


# -- recover -------------------------------------------------------------------


def cmd_recover_wiener(args):
    img = load_image(args.image)
    stack = io.load_psf_stack(args.stack)
    sensor = _sensor(args, stack)
    part = simulate.partition(img, args.rings or stack.n_fov)
    rec = wiener.wiener_image(img, stack, part, args.nsr, sensor, args.sectors)
    save_image(args.out, rec, args.bits)
    write_manifest(_manifest_path(args.out), args, [args.out])


def cmd_recover_part(args):
    if args.weights and Path(args.weights).exists():
        cfg, weights, wseed = io.load_weights(args.weights)
        if args.mode and args.mode.upper() != cfg.mode:
            raise optics.ConfigurationError(f"weights are for {cfg.mode}, not {args.mode.upper()}")
    else:
        if args.weights and not args.save_weights:
            raise io.DataError(f"missing weight file {args.weights}")
        _require_seed(args, "to initialize weights")
        model = dict(args.model_config)
        model.setdefault("mode", (args.mode or "ac").upper())
        cfg = PartConfig(**model)
        weights, wseed = init_weights(cfg, args.seed), args.seed
        if args.save_weights:
            io.save_weights(args.save_weights, cfg, weights, wseed)
    img = load_image(args.image)
    if args.psf_map:
        m = io.load_psf_map(args.psf_map)
    elif args.stack:
        down = cfg.unshuffle if cfg.mode == "AC" else 1
        m = _build_map(io.load_psf_stack(args.stack), img, cfg.k_prime, args.channel, down)
    else:
        raise UsageError("pass --psf-map or --stack")
    if m.k_prime != cfg.k_prime:
        raise optics.ConfigurationError(f"PSF map k'={m.k_prime} but the model expects {cfg.k_prime}")
    out = part_forward(img.pixels, m.data, cfg, weights)
    res = img if cfg.mode == "AC" else img.scaled(1.0 / cfg.sr_scale, out)
    save_image(args.out, res.with_pixels(out), args.bits)
    write_manifest(_manifest_path(args.out), args, [args.out], {"model": cfg.to_dict(), "weight_seed": wseed})


# -- eval ----------------------------------------------------------------------


def cmd_eval_metrics(args):
    pred, ref = load_image(args.pred), load_image(args.ref)
    mask = None if args.no_mask else ref.annulus_mask()
    p = evalkit.psnr(pred.pixels, ref.pixels, mask)
    s = evalkit.ssim(pred.pixels, ref.pixels, mask)
    io.atomic_write_text(args.out, _csv_text(["metric", "value"], [("psnr_db", f"{p:.6f}"), ("ssim", f"{s:.6f}")]))
    write_manifest(_manifest_path(args.out), args, [args.out])
    print(f"PSNR {p:.3f} dB  SSIM {s:.4f}")


def read_patch_list(path) -> list:
    """Lines of ``path[,label]``; relative paths resolve against the list file."""
    path = Path(path)
    if not path.exists():
        raise io.DataError(f"missing patch list {path}")
    entries = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        p = Path(parts[0])
        p = p if p.is_absolute() else path.parent / p
        entries.append((p, parts[1] if len(parts) > 1 and parts[1] else p.stem))
    if not entries:
        raise io.DataError(f"{path}: no patches listed")
    return entries


def _load_patch(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() in PNG_SUFFIXES:
        return io.read_png(path)
    header, data = io.read_tensor(path)
    return data.reshape(header["shape"])


def _measure(entries, oversample) -> list:
    curves = []
    for p, label in entries:
        c = evalkit.sfr(_load_patch(p), oversample)
        c.label = label
        curves.append(c)
    return curves


def diffraction_limited_curves(pixel_size_um: float, lam_nm: float = 550.0) -> list:
    """Reference MTF of an aberration-free lens with the preset pupil geometry."""
    k = optics.psf_from_wavefront(np.zeros((256, 256)), lam_nm, presets.EXIT_PUPIL_MM, presets.PUPIL_RADIUS_MM,
                                  9, pixel_size_um)
    curves = evalkit.reference_curves([k])
    curves[0].label = "diffraction-limited"
    return curves


def cmd_eval_sfr(args):
    test = _measure(read_patch_list(args.patches), args.oversample)
    if args.reference:
        ref = _measure(read_patch_list(args.reference), args.oversample)
    else:
        ref = diffraction_limited_curves(args.pixel_size)
    out = Path(args.out)
    plotting.write_curves_csv(out / "curves.csv", test)
    rows = [(c.label, "mtf50", f"{evalkit.mtf50(c):.6f}") for c in test]
    rows += [(c.label, "mtf_area", f"{evalkit.mtf_area(c):.6f}") for c in test]
    o50, oarea, o = evalkit.oiqe(test, ref)
    rows += [("all", "oiqe50", f"{o50:.6f}"), ("all", "oiqe_area", f"{oarea:.6f}"), ("all", "oiqe", f"{o:.6f}")]
    io.atomic_write_text(out / "summary.csv", _csv_text(["label", "metric", "value"], rows))
    write_manifest(out / "sfr.manifest.json", args, [out / "curves.csv", out / "summary.csv"])
    print(f"OIQE50 {o50:.2%}  OIQEarea {oarea:.2%}  OIQE {o:.2%}")


def cmd_eval_oiqe(args):
    test = plotting.read_curves_csv(args.test)
    ref = plotting.read_curves_csv(args.ref)
    o50, oarea, o = evalkit.oiqe(test, ref)
    io.atomic_write_text(args.out, _csv_text(["metric", "value"], [
        ("oiqe50", f"{o50:.6f}"), ("oiqe_area", f"{oarea:.6f}"), ("oiqe", f"{o:.6f}")]))
    write_manifest(_manifest_path(args.out), args, [args.out])
    print(f"OIQE {o:.2%}")


def cmd_eval_checker_gt(args):
    out = Path(args.out)
    rows, written = [], []
    for p in args.images:
        gt, degenerate = evalkit.checker_gt(io.read_png(p), args.min_region)
        dst = out / f"{Path(p).stem}_gt.png"
        io.write_png(dst, gt, 8)
        written.append(dst)
        rows.append((Path(p).name, dst.name, int(degenerate)))
        if degenerate:
            log.warning("%s: degenerate patch copied unchanged", p)
    io.atomic_write_text(out / "checker_gt.csv", _csv_text(["input", "output", "degenerate"], rows))
    write_manifest(out / "checker_gt.manifest.json", args, written + [out / "checker_gt.csv"])


# -- plot ----------------------------------------------------------------------


def cmd_plot_mtf(args):
    curves = [c for path in args.curves for c in plotting.read_curves_csv(path)]
    analytic = []
    if args.analytic_sigma is not None:
        f = np.linspace(0.0, 0.5, 101)
        s = args.analytic_sigma
        analytic.append(evalkit.MtfCurve(f, np.exp(-2 * np.pi**2 * s**2 * f**2), f"gaussian sigma={s:g}"))
    csv_path = plotting.plot_mtf(curves, args.out, analytic=analytic)
    write_manifest(_manifest_path(args.out), args, [args.out, csv_path])


def cmd_plot_psf(args):
    stack = io.load_psf_stack(args.stack)
    plotting.plot_psf(stack, args.out, n_cells=args.cells, channel=psfmap.CHANNELS[args.channel])
    write_manifest(_manifest_path(args.out), args, [args.out, Path(args.out).with_suffix(".csv")])


# -- parser --------------------------------------------------------------------


def _common(p, seed=False, mode=False, threads=False, out=True):
    p.add_argument("--config", help="JSON file of flag defaults")
    if seed:
        p.add_argument("--seed", type=int, help="seed for stochastic steps")
    if mode:
        p.add_argument("--mode", choices=["ac", "srac"], type=str.lower, default="ac")
    if threads:
        p.add_argument("--threads", type=int, default=_default_threads(),
                       help=f"worker threads (default ${THREADS_ENV} or 1)")
    if out:
        p.add_argument("--out", required=True)


def _noise_flags(p):
    p.add_argument("--no-noise", dest="noise", action="store_false", help="disable mosaic and sensor noise")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = _Parser(prog="palsim", description=__doc__.splitlines()[0].replace("``", ""))
    parser.add_argument("-v", "--verbose", action="store_true")
    groups = parser.add_subparsers(dest="group", required=True, parser_class=_Parser)
    leaves = {}

    def leaf(group_parser, name, func, help_):
        p = group_parser.add_parser(name, help=help_)
        p.set_defaults(func=func)
        leaves[(group_name[group_parser], name)] = p
        return p

    group_name = {}

    def group(name, help_):
        sub = groups.add_parser(name, help=help_).add_subparsers(dest="action", required=True,
                                                                 parser_class=_Parser)
        group_name[sub] = name
        return sub

    g = group("psf", "PSF synthesis")
    p = leaf(g, "preset", cmd_psf_preset, "write a synthetic prescription and sensor profile")
    p.add_argument("--lens", choices=sorted(presets.SPOT_RADIUS_UM), default="p1")
    p.add_argument("--n-lambda", type=int, default=31)
    p.add_argument("--n-fov", type=int, default=128)
    p.add_argument("--n-poly", type=int, default=37)
    _common(p, mode=True)
    p = leaf(g, "synth", cmd_psf_synth, "synthesize the PSF stack of a prescription")
    p.add_argument("--prescription", required=True)
    p.add_argument("--sensor", required=True)
    p.add_argument("--pupil-samples", type=int, default=512)
    p.add_argument("--pad", type=int, default=2)
    _common(p, mode=True, threads=True)
    p = leaf(g, "perturb", cmd_psf_perturb, "scale Zernike coefficients by seeded random factors")
    p.add_argument("--prescription", required=True)
    p.add_argument("--range", type=float, default=0.25)
    _common(p, seed=True)

    g = group("sim", "aberration simulation")
    p = leaf(g, "run", cmd_sim_run, "degrade one image")
    p.add_argument("--image", required=True)
    p.add_argument("--stack", required=True)
    p.add_argument("--sensor")
    p.add_argument("--rings", type=int)
    p.add_argument("--sectors", type=int, default=simulate.DEFAULT_SECTORS)
    p.add_argument("--bits", type=int, choices=[8, 16], default=8)
    _noise_flags(p)
    _common(p, seed=True, mode=True)
    p = leaf(g, "dataset", cmd_sim_dataset, "degrade a folder under perturbed virtual lenses")
    p.add_argument("--hq", required=True)
    p.add_argument("--prescription")
    p.add_argument("--lens", choices=sorted(presets.SPOT_RADIUS_UM), default="p1")
    p.add_argument("--n-lambda", type=int, default=31)
    p.add_argument("--n-fov", type=int, default=128)
    p.add_argument("--sensor")
    p.add_argument("--n-virtual", type=int, default=10)
    p.add_argument("--range", type=float, default=0.25)
    p.add_argument("--pupil-samples", type=int, default=512)
    p.add_argument("--rings", type=int)
    p.add_argument("--sectors", type=int, default=simulate.DEFAULT_SECTORS)
    p.add_argument("--bits", type=int, choices=[8, 16], default=8)
    _noise_flags(p)
    _common(p, seed=True, mode=True, threads=True)

    g = group("psfmap", "PSF map construction")
    p = leaf(g, "build", cmd_psfmap_build, "build a PSF map aligned with an image")
    p.add_argument("--stack", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--k-prime", type=int, default=5)
    p.add_argument("--channel", choices=["R", "G", "B", "luma"], default="G")
    p.add_argument("--downscale", type=int, help="area-average factor (default 4 for ac, 1 for srac)")
    _common(p, mode=True)

    g = group("recover", "image recovery")
    p = leaf(g, "wiener", cmd_recover_wiener, "patch-wise Wiener deconvolution")
    p.add_argument("--image", required=True)
    p.add_argument("--stack", required=True)
    p.add_argument("--sensor")
    p.add_argument("--nsr", type=float, default=wiener.DEFAULT_NSR)
    p.add_argument("--rings", type=int)
    p.add_argument("--sectors", type=int, default=simulate.DEFAULT_SECTORS)
    p.add_argument("--bits", type=int, choices=[8, 16], default=8)
    _common(p, mode=True)
    p = leaf(g, "part", cmd_recover_part, "PSF-aware transformer forward pass")
    p.add_argument("--image", required=True)
    p.add_argument("--weights", help="weight file to load")
    p.add_argument("--save-weights", help="write freshly initialized weights here")
    p.add_argument("--psf-map")
    p.add_argument("--stack", help="build the PSF map from this stack when --psf-map is absent")
    p.add_argument("--channel", choices=["R", "G", "B", "luma"], default="G")
    p.add_argument("--bits", type=int, choices=[8, 16], default=8)
    p.add_argument("--config", help="JSON with model fields (n_prtb, channels, ...) and flag defaults")
    p.add_argument("--seed", type=int, help="seed for weight initialization")
    p.add_argument("--mode", choices=["ac", "srac"], type=str.lower)
    p.add_argument("--out", required=True)

    g = group("eval", "evaluation")
    p = leaf(g, "metrics", cmd_eval_metrics, "PSNR and SSIM over the annulus")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--no-mask", action="store_true", help="evaluate the whole frame")
    _common(p)
    p = leaf(g, "sfr", cmd_eval_sfr, "slanted-edge MTF of listed patches, with OIQE")
    p.add_argument("--patches", required=True, help="file of 'path[,label]' lines")
    p.add_argument("--reference", help="patch list of the reference system")
    p.add_argument("--pixel-size", type=float, default=presets.PIXEL_SIZE_UM["ac"],
                   help="pixel pitch (um) of the default diffraction-limited reference")
    p.add_argument("--oversample", type=int, default=4)
    _common(p)
    p = leaf(g, "oiqe", cmd_eval_oiqe, "OIQE from two curve CSVs")
    p.add_argument("--test", required=True)
    p.add_argument("--ref", required=True)
    _common(p)
    p = leaf(g, "checker-gt", cmd_eval_checker_gt, "binary ground truth for checkerboard patches")
    p.add_argument("--images", nargs="+", required=True)
    p.add_argument("--min-region", type=int, default=8)
    _common(p)

    g = group("plot", "figures")
    p = leaf(g, "mtf", cmd_plot_mtf, "plot MTF curves (PNG + CSV)")
    p.add_argument("--curves", nargs="+", required=True)
    p.add_argument("--analytic-sigma", type=float, help="overlay a Gaussian-blur MTF")
    _common(p)
    p = leaf(g, "psf", cmd_plot_psf, "plot a grid of kernels (PNG + CSV)")
    p.add_argument("--stack", required=True)
    p.add_argument("--cells", type=int, default=8)
    p.add_argument("--channel", choices=["R", "G", "B"], default="G")
    _common(p)
    return parser, leaves


def _apply_config(parser, leaves, argv) -> argparse.Namespace:
    """Parse, then re-parse with ``--config`` values as defaults."""
    args = parser.parse_args(argv)
    args.model_config = {}
    if not getattr(args, "config", None):
        return args
    cfg = io.read_json(args.config)
    if not isinstance(cfg, dict):
        raise io.DataError(f"{args.config}: expected a JSON object")
    leaf = leaves[(args.group, args.action)]
    dests = {a.dest for a in leaf._actions}
    model_fields = {f.name for f in fields(PartConfig)} if args.action == "part" else set()
    defaults, model = {}, {}
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if key in model_fields:
            model[key] = value
        elif dest in dests and dest not in ("config", "help"):
            defaults[dest] = value
        else:
            raise io.DataError(f"{args.config}: unknown key {key!r}")
    leaf.set_defaults(**defaults)
    args = parser.parse_args(argv)
    args.model_config = model
    return args


def dispatch(argv=None) -> int:
    parser, leaves = build_parser()
    try:
        args = _apply_config(parser, leaves, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ValueError, OSError) as exc:
        print(f"palsim: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"palsim: usage error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, KeyError) as exc:
        print(f"palsim: error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
