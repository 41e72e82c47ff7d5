"""RMSE/PSNR scoring against the undistorted original and the parameter sweep."""

import csv
import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .distortion import DistortionCenter, RadialPolyParams
from .errors import DimensionMismatchError, EmptyRegionError
from .inverse import SINGLE_ITERATION, NewtonConfig, fit_rational_inverse
from .rectify import (Method, apply_map, apply_synthetic_distortion, build_map_newton,
                      build_map_rational, build_map_triangulation)

log = logging.getLogger(__name__)

PEAK = 255.0
DEFAULT_CROP = 3
INVERSE_METHODS = (Method.NEWTON_SINGLE, Method.NEWTON_CONVERGED,
                   Method.RATIONAL_BILINEAR, Method.TRIANGULATION_LINEAR)

CASE_COLUMNS = ("image", "kappa1_prime", "kappa2_prime", "method", "rmse", "psnr",
                "build_time_seconds", "valid_pixel_count")
SUMMARY_COLUMNS = ("kappa1_prime", "kappa2_prime", "method", "image_count", "rmse",
                   "psnr", "mean_build_time_seconds", "failed_cases")


def psnr_from_rmse(rmse):
    return math.inf if rmse == 0 else 20.0 * math.log10(PEAK / rmse)


@dataclass(frozen=True)
class MetricReport:
    rmse: float
    psnr: float
    crop_margin: int
    valid_pixel_count: int
    method: Method = None
    kappa1_prime: float = float("nan")
    kappa2_prime: float = float("nan")
    image: str = ""
    build_time_seconds: float = float("nan")


def compare(reference, candidate, candidate_mask=None, crop_margin=DEFAULT_CROP,
            reference_mask=None):
    """RMSE and PSNR over pixels inside the crop margin and valid in both masks."""
    if reference.samples.shape != candidate.samples.shape:
        raise DimensionMismatchError(
            f"reference {reference.samples.shape} vs candidate {candidate.samples.shape}")
    if crop_margin < 0:
        raise ValueError("crop_margin must be non-negative")
    h, w = reference.height, reference.width
    region = np.zeros((h, w), bool)
    region[crop_margin:h - crop_margin, crop_margin:w - crop_margin] = True
    for m in (candidate_mask, reference_mask):
        if m is not None:
            region &= np.asarray(m, bool)
    count = int(region.sum())
    if count == 0:
        raise EmptyRegionError("no pixels left after masking and cropping")
    diff = (candidate.samples[region].astype(np.float64)
            - reference.samples[region].astype(np.float64))
    rmse = float(np.sqrt(np.mean(diff ** 2)))
    return MetricReport(rmse, psnr_from_rmse(rmse), crop_margin, count)


def aggregate(reports):
    """Pool reports: root of the mean of the per-report squared RMSE."""
    rmse = math.sqrt(sum(r.rmse ** 2 for r in reports) / len(reports))
    return rmse, psnr_from_rmse(rmse)


def log_grid(start, end, count):
    """``count`` logarithmically spaced values from ``start`` to ``end``."""
    if count == 1:
        return [float(start)]
    return [float(v) for v in np.logspace(math.log10(start), math.log10(end), count)]


@dataclass
class SweepConfig:
    crop_margin: int = DEFAULT_CROP
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    fit_stride: int = 1
    center: DistortionCenter = None
    kappa2_ratio: float = 0.2


@dataclass
class SweepResult:
    cases: list
    summary: list
    failures: list

    def mean_psnr(self, method, kappa1):
        for row in self.summary:
            if row["method"] == method.cli_name and row["kappa1_prime"] == kappa1:
                return row["psnr"]
        raise KeyError((method, kappa1))


def build_map(method, inv, dims, cfg):
    if method is Method.NEWTON_SINGLE:
        return build_map_newton(inv, dims, replace(SINGLE_ITERATION,
                                                   max_iterations=cfg.newton.max_iterations,
                                                   tolerance=cfg.newton.tolerance))
    if method is Method.NEWTON_CONVERGED:
        return build_map_newton(inv, dims, cfg.newton)
    if method is Method.RATIONAL_BILINEAR:
        fit = fit_rational_inverse(inv, dims[0], dims[1], cfg.fit_stride)
        return build_map_rational(fit, dims)
    if method is Method.TRIANGULATION_LINEAR:
        return build_map_triangulation(inv, dims)
    raise ValueError(f"{method.name} needs forward parameters and cannot run in a sweep")


def run_sweep(images, kappa1_grid, methods=INVERSE_METHODS, config=None, names=None):
    """Distort, rectify and score every image x kappa1' x method.

    ``kappa2' = kappa2_ratio * kappa1'``. Maps are built once per (kappa, method,
    image size) and timed; the build time is attributed to every case that
    uses the map. Failed cases are logged and recorded, not raised.
    """
    cfg = config or SweepConfig()
    if not images:
        raise ValueError("no images to evaluate")
    if not kappa1_grid:
        raise ValueError("empty kappa grid")
    names = names or [f"image{i}" for i in range(len(images))]
    cases, failures = [], []
    for k1 in kappa1_grid:
        k2 = cfg.kappa2_ratio * k1
        maps = {}
        for name, img in zip(names, images):
            dims = (img.width, img.height)
            center = cfg.center or DistortionCenter.image_center(*dims)
            inv = RadialPolyParams(k1, k2, center)
            distorted, dmask = apply_synthetic_distortion(img, inv)
            for method in methods:
                key = (method, dims)
                try:
                    if key not in maps:
                        t0 = time.perf_counter()
                        rmap = build_map(method, inv, dims, cfg)
                        maps[key] = (rmap, time.perf_counter() - t0)
                    rmap, build_time = maps[key]
                    out, omask = apply_map(rmap, distorted, dmask)
                    rep = compare(img, out, omask, cfg.crop_margin)
                except Exception as exc:  # noqa: BLE001 - a failed case must not stop the sweep
                    log.warning("case %s k1'=%g %s failed: %s", name, k1, method.cli_name, exc)
                    failures.append((name, k1, method, str(exc)))
                    continue
                cases.append(replace(rep, method=method, kappa1_prime=k1, kappa2_prime=k2,
                                     image=name, build_time_seconds=build_time))
    return SweepResult(cases, summarize(cases, failures), failures)


def summarize(cases, failures=()):
    groups = {}
    for c in cases:
        groups.setdefault((c.kappa1_prime, c.kappa2_prime, c.method), []).append(c)
    rows = []
    for (k1, k2, method), reps in groups.items():
        rmse, psnr = aggregate(reps)
        rows.append({
            "kappa1_prime": k1, "kappa2_prime": k2, "method": method.cli_name,
            "image_count": len(reps), "rmse": rmse, "psnr": psnr,
            "mean_build_time_seconds": float(np.mean([r.build_time_seconds for r in reps])),
            "failed_cases": sum(1 for f in failures if f[1] == k1 and f[2] is method),
        })
    return rows


def case_rows(cases):
    for c in cases:
        yield {"image": c.image, "kappa1_prime": c.kappa1_prime,
               "kappa2_prime": c.kappa2_prime, "method": c.method.cli_name,
               "rmse": c.rmse, "psnr": c.psnr, "build_time_seconds": c.build_time_seconds,
               "valid_pixel_count": c.valid_pixel_count}


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row[k]) for k in columns})


def _fmt(v):
    if isinstance(v, float):
        if math.isinf(v):
            return "inf"
        return repr(v)
    return v
