"""Lens distortion rectification from inverse radial distortion parameters."""

from .delaunay import Triangulation, triangulate
from .distortion import (Direction, DistortionCenter, NormalizedPoint, RadialPolyParams,
                         ScreenPoint, denormalize, map_point, map_points, normalize)
from .evaluation import MetricReport, SweepConfig, compare, run_sweep
from .image import RasterImage, bilinear_sample, read_image, write_image
from .inverse import (NewtonConfig, NewtonMode, RationalInverseParams, fit_rational_inverse,
                      newton_invert_radius, newton_map_point, rational_map_point)
from .rectify import (Method, RectificationMap, apply_map, apply_synthetic_distortion,
                      build_map_forward, build_map_newton, build_map_rational,
                      build_map_triangulation, load_map, save_map)

__version__ = "0.1.0"
