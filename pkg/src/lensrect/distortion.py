"""Two-coefficient polynomial radial distortion model.

A point at radius r from the distortion center is scaled by
``1 + k1*r**2 + k2*r**4``. With ``direction=FORWARD`` the input is an
undistorted point and the output its distorted position; with
``direction=INVERSE`` it is the other way round. All quantities are pixels.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DirectionMismatchError


class Direction(enum.Enum):
    FORWARD = "forward"
    INVERSE = "inverse"


@dataclass(frozen=True)
class DistortionCenter:
    cx: float
    cy: float

    def __post_init__(self):
        if not (math.isfinite(self.cx) and math.isfinite(self.cy)):
            raise ValueError(f"distortion center must be finite, got ({self.cx}, {self.cy})")

    @classmethod
    def image_center(cls, width, height):
        """Center of a ``width`` x ``height`` image with pixel centers on integers."""
        return cls((width - 1) / 2.0, (height - 1) / 2.0)


@dataclass(frozen=True)
class ScreenPoint:
    x: float
    y: float


@dataclass(frozen=True)
class NormalizedPoint:
    x: float
    y: float

    def radius(self):
        return math.hypot(self.x, self.y)


@dataclass(frozen=True)
class RadialPolyParams:
    k1: float
    k2: float
    center: DistortionCenter
    direction: Direction = Direction.INVERSE

    def __post_init__(self):
        if not (math.isfinite(self.k1) and math.isfinite(self.k2)):
            raise ValueError("k1 and k2 must be finite")
        if not isinstance(self.direction, Direction):
            raise TypeError(f"direction must be a Direction, got {self.direction!r}")

    @property
    def is_identity(self):
        return self.k1 == 0.0 and self.k2 == 0.0

    def require(self, direction):
        """Raise DirectionMismatchError unless these params are tagged ``direction``."""
        if self.direction is not direction:
            raise DirectionMismatchError(
                f"expected {direction.value} parameters, got {self.direction.value}")
        return self

    def scale(self, r):
        """Radial scale factor at radius ``r`` (scalar or array)."""
        r2 = np.square(r)
        return 1.0 + self.k1 * r2 + self.k2 * r2 * r2

    def as_dict(self):
        return {"k1": self.k1, "k2": self.k2, "cx": self.center.cx,
                "cy": self.center.cy, "direction": self.direction.value}


def normalize(p, c):
    return NormalizedPoint(p.x - c.cx, p.y - c.cy)


def denormalize(p, c):
    return ScreenPoint(p.x + c.cx, p.y + c.cy)


def map_point(p, params):
    """Apply the radial polynomial to a single normalized point."""
    s = 1.0 + params.k1 * (p.x * p.x + p.y * p.y) + params.k2 * (p.x * p.x + p.y * p.y) ** 2
    return NormalizedPoint(p.x * s, p.y * s)


def map_points(xy, params):
    """Vectorised ``map_point`` over an (..., 2) array of normalized coordinates."""
    xy = np.asarray(xy, dtype=np.float64)
    r2 = xy[..., 0] ** 2 + xy[..., 1] ** 2
    s = 1.0 + params.k1 * r2 + params.k2 * r2 * r2
    return xy * s[..., None]


def map_radius(r, params):
    r = np.asarray(r, dtype=np.float64)
    return r * params.scale(r)


def pixel_grid(width, height):
    """Screen coordinates of all pixel centers, shape (height, width, 2), x first."""
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    return np.stack([xs, ys], axis=-1)


def corner_radius(width, height, center=None):
    """Largest distance from ``center`` to an image corner."""
    if center is None:
        center = DistortionCenter.image_center(width, height)
    corners = [(0, 0), (width - 1, 0), (0, height - 1), (width - 1, height - 1)]
    return max(math.hypot(x - center.cx, y - center.cy) for x, y in corners)
