"""Command-line interface: distort, build-map, rectify, fit, sweep."""

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from .distortion import Direction, DistortionCenter, RadialPolyParams, corner_radius
from .errors import LensRectError
from .evaluation import (CASE_COLUMNS, INVERSE_METHODS, SUMMARY_COLUMNS, SweepConfig,
                         case_rows, log_grid, run_sweep, write_csv)
from .image import SUPPORTED_SUFFIXES, mask_path, read_image, write_image, write_mask
from .inverse import NewtonConfig, NewtonMode, RationalInverseParams, fit_rational_inverse
from .rectify import (Method, apply_map, apply_synthetic_distortion, build_map_forward,
                      build_map_newton, build_map_rational, build_map_triangulation,
                      load_map, save_map)

log = logging.getLogger("lensrect")


def _float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"must be finite: {text!r}")
    return v


def _positive_float(text):
    v = _float(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return v


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text!r}")
    return v


def _non_negative_int(text):
    v = int(text) if text.lstrip("-").isdigit() else None
    if v is None or v < 0:
        raise argparse.ArgumentTypeError(f"must be a non-negative integer: {text!r}")
    return v


def _center(text):
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected X,Y, got {text!r}")
    return DistortionCenter(_float(parts[0]), _float(parts[1]))


def _size(text):
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}")
    return _positive_int(parts[0]), _positive_int(parts[1])


def parse_grid(text):
    """``start:end:count:log`` (or ``:lin``), or a comma-separated list of values."""
    if ":" not in text:
        vals = [_float(t) for t in text.split(",") if t.strip()]
        if not vals:
            raise argparse.ArgumentTypeError("empty grid")
        if any(v < 0 for v in vals):
            raise argparse.ArgumentTypeError("grid values must be non-negative")
        return vals
    parts = text.split(":")
    if len(parts) not in (3, 4):
        raise argparse.ArgumentTypeError(f"expected start:end:count[:log|lin], got {text!r}")
    start, end, count = _float(parts[0]), _float(parts[1]), _positive_int(parts[2])
    spacing = parts[3] if len(parts) == 4 else "log"
    if spacing == "log":
        if start <= 0 or end <= 0:
            raise argparse.ArgumentTypeError("log grid endpoints must be positive")
        return log_grid(start, end, count)
    if spacing == "lin":
        if start < 0 or end < 0:
            raise argparse.ArgumentTypeError("grid values must be non-negative")
        return [float(v) for v in np.linspace(start, end, count)]
    raise argparse.ArgumentTypeError(f"unknown spacing {spacing!r}")


def _methods(text):
    try:
        return [Method.from_cli(t.strip()) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser():
    p = argparse.ArgumentParser(prog="lensrect", description=__doc__)
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="worker threads for parallel kernels (default: all cores)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def inverse_flags(sp, required=True):
        sp.add_argument("--k1p", type=_float, required=required, help="kappa1' (pix^-2)")
        sp.add_argument("--k2p", type=_float, required=required, help="kappa2' (pix^-4)")
        sp.add_argument("--center", type=_center, help="distortion center X,Y in pixels")

    d = sub.add_parser("distort", help="apply synthetic distortion from inverse parameters")
    d.add_argument("input", type=Path)
    inverse_flags(d)
    d.add_argument("--out", type=Path, required=True)

    b = sub.add_parser("build-map", help="build and save a rectification map")
    b.add_argument("--method", required=True,
                   choices=[m.cli_name for m in Method])
    b.add_argument("--size", type=_size, required=True, help="source size WxH")
    b.add_argument("--out-size", type=_size, help="output size WxH (default: source size)")
    inverse_flags(b, required=False)
    b.add_argument("--k1", type=_float, help="forward kappa1 (pix^-2)")
    b.add_argument("--k2", type=_float, help="forward kappa2 (pix^-4)")
    b.add_argument("--params", type=Path, help="fitted rational model JSON (from 'fit')")
    b.add_argument("--newton-tol", type=_positive_float, default=1e-8)
    b.add_argument("--newton-max-iters", type=_positive_int, default=20)
    b.add_argument("--stride", type=_positive_int, default=1,
                   help="sampling stride when fitting the rational model")
    b.add_argument("--out", type=Path, required=True)

    r = sub.add_parser("rectify", help="apply a saved map to one or more images")
    r.add_argument("map", type=Path)
    r.add_argument("inputs", type=Path, nargs="+")
    r.add_argument("--out", type=Path, required=True,
                   help="output file, or directory when several inputs are given")

    f = sub.add_parser("fit", help="fit the rational model to inverse parameters")
    inverse_flags(f)
    f.add_argument("--size", type=_size, required=True)
    f.add_argument("--stride", type=_positive_int, default=1)
    f.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("sweep", help="run the distortion sweep over a directory of images")
    s.add_argument("image_dir", type=Path)
    s.add_argument("--grid", type=parse_grid, default=parse_grid("1e-13:1e-11:9:log"),
                   help="kappa1' grid: start:end:count:log|lin or comma list")
    s.add_argument("--methods", type=_methods, default=list(INVERSE_METHODS),
                   help="comma list of newton1,newton,rational,triangulation")
    s.add_argument("--center", type=_center)
    s.add_argument("--crop", type=_non_negative_int, default=3)
    s.add_argument("--stride", type=_positive_int, default=1)
    s.add_argument("--newton-tol", type=_positive_float, default=1e-8)
    s.add_argument("--newton-max-iters", type=_positive_int, default=20)
    s.add_argument("--out", type=Path, required=True, help="output directory for CSVs")
    return p


def _inverse(args, dims):
    center = args.center or DistortionCenter.image_center(*dims)
    return RadialPolyParams(args.k1p, args.k2p, center, Direction.INVERSE)


def cmd_distort(args):
    img = read_image(args.input)
    inv = _inverse(args, img.dims)
    out, mask = apply_synthetic_distortion(img, inv)
    write_image(args.out, out)
    write_mask(mask_path(args.out), mask)
    rc = corner_radius(img.width, img.height, inv.center)
    factor = float(inv.scale(rc))
    print(f"corner radius {rc:.2f} px -> {rc * factor:.2f} px (expansion factor {factor:.6f})")
    print(f"valid pixels: {mask.mean() * 100:.2f}%")
    return 0


def _build(args, parser):
    method = Method.from_cli(args.method)
    src = args.size
    has_inv = args.k1p is not None or args.k2p is not None
    has_fwd = args.k1 is not None or args.k2 is not None
    if method is Method.FORWARD_BILINEAR:
        if has_inv:
            parser.error("--method forward takes forward parameters --k1/--k2, "
                         "not inverse --k1p/--k2p (direction mismatch)")
        if args.k1 is None or args.k2 is None:
            parser.error("--method forward requires --k1 and --k2")
        center = args.center or DistortionCenter.image_center(*src)
        fwd = RadialPolyParams(args.k1, args.k2, center, Direction.FORWARD)
        return build_map_forward(fwd, src, args.out_size)
    if has_fwd:
        parser.error(f"--method {args.method} takes inverse parameters --k1p/--k2p, "
                     "not forward --k1/--k2 (direction mismatch)")
    if method is Method.RATIONAL_BILINEAR and args.params is not None:
        if has_inv:
            parser.error("give either --params or --k1p/--k2p, not both")
        fit = RationalInverseParams.from_dict(json.loads(args.params.read_text()))
        return build_map_rational(fit, src, args.out_size)
    if args.k1p is None or args.k2p is None:
        parser.error(f"--method {args.method} requires --k1p and --k2p")
    inv = _inverse(args, src)
    if method is Method.TRIANGULATION_LINEAR:
        return build_map_triangulation(inv, src, args.out_size)
    if method is Method.RATIONAL_BILINEAR:
        fit = fit_rational_inverse(inv, src[0], src[1], args.stride)
        return build_map_rational(fit, src, args.out_size)
    mode = NewtonMode.SINGLE if method is Method.NEWTON_SINGLE else NewtonMode.CONVERGE
    cfg = NewtonConfig(args.newton_max_iters, args.newton_tol, mode)
    return build_map_newton(inv, src, cfg, args.out_size)


def cmd_build_map(args, parser):
    t0 = time.perf_counter()
    rmap = _build(args, parser)
    elapsed = time.perf_counter() - t0
    save_map(args.out, rmap)
    valid = int((rmap.count > 0).sum())
    print(f"{rmap.method.cli_name} map {rmap.out_width}x{rmap.out_height}: "
          f"built in {elapsed:.3f} s, {valid}/{rmap.count.size} valid pixels")
    return 0


def cmd_rectify(args):
    rmap = load_map(args.map)
    many = len(args.inputs) > 1
    if many:
        args.out.mkdir(parents=True, exist_ok=True)
    for path in args.inputs:
        img = read_image(path)
        out, mask = apply_map(rmap, img)
        dest = args.out / path.name if many else args.out
        write_image(dest, out)
        write_mask(mask_path(dest), mask)
        print(f"{path} -> {dest}")
    return 0


def cmd_fit(args):
    inv = _inverse(args, args.size)
    fit = fit_rational_inverse(inv, args.size[0], args.size[1], args.stride)
    doc = dict(fit.as_dict(), kappa1_prime=args.k1p, kappa2_prime=args.k2p,
               width=args.size[0], height=args.size[1], stride=args.stride)
    args.out.write_text(json.dumps(doc, indent=2))
    print(f"rms residual {fit.rms_residual:.6g} px over radius [0, {fit.radius_range:.1f}]")
    return 0


def _load_dir(image_dir):
    paths = sorted(p for p in image_dir.iterdir()
                   if p.suffix.lower() in SUPPORTED_SUFFIXES and not p.name.endswith(".mask.pgm"))
    images, names = [], []
    for p in paths:
        try:
            images.append(read_image(p))
            names.append(p.name)
        except Exception as exc:  # noqa: BLE001 - skip unreadable files
            log.warning("skipping unreadable image %s: %s", p, exc)
    return images, names


def cmd_sweep(args):
    if not args.image_dir.is_dir():
        raise FileNotFoundError(f"image directory not found: {args.image_dir}")
    images, names = _load_dir(args.image_dir)
    if not images:
        raise LensRectError(f"no readable images in {args.image_dir}")
    bad = [m.cli_name for m in args.methods if m not in INVERSE_METHODS]
    if bad:
        raise LensRectError(f"methods not available in a sweep: {', '.join(bad)}")
    cfg = SweepConfig(crop_margin=args.crop, fit_stride=args.stride, center=args.center,
                      newton=NewtonConfig(args.newton_max_iters, args.newton_tol))
    result = run_sweep(images, args.grid, args.methods, cfg, names)
    args.out.mkdir(parents=True, exist_ok=True)
    write_csv(args.out / "cases.csv", CASE_COLUMNS, case_rows(result.cases))
    write_csv(args.out / "summary.csv", SUMMARY_COLUMNS, result.summary)

    print(f"{len(images)} image(s), {len(result.cases)} case(s), "
          f"{len(result.failures)} failure(s)")
    header = "kappa1'".ljust(12) + "".join(m.cli_name.rjust(15) for m in args.methods)
    print(header)
    for k1 in args.grid:
        cells = []
        for m in args.methods:
            try:
                cells.append(f"{result.mean_psnr(m, k1):15.3f}")
            except KeyError:
                cells.append("failed".rjust(15))
        print(f"{k1:<12.4g}" + "".join(cells))
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None:
        import numba
        numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    try:
        if args.command == "distort":
            return cmd_distort(args)
        if args.command == "build-map":
            return cmd_build_map(args, parser)
        if args.command == "rectify":
            return cmd_rectify(args)
        if args.command == "fit":
            return cmd_fit(args)
        if args.command == "sweep":
            return cmd_sweep(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return 1
    except (LensRectError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    parser.error(f"unknown command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
