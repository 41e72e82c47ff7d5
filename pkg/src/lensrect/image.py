"""Raster images, bilinear sampling and lossless file I/O."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

SUPPORTED_SUFFIXES = (".png", ".pgm", ".ppm", ".pnm")


@dataclass(frozen=True, eq=False)
class RasterImage:
    """Float32 samples in [0, 255] with shape (height, width, channels)."""

    samples: np.ndarray

    def __post_init__(self):
        s = self.samples
        if s.ndim == 2:
            s = s[:, :, None]
        s = np.ascontiguousarray(s, dtype=np.float32)
        if s.ndim != 3 or s.shape[2] not in (1, 3):
            raise ValueError(f"expected (h, w, 1|3) samples, got shape {self.samples.shape}")
        if not np.all(np.isfinite(s)):
            raise ValueError("image samples must be finite")
        object.__setattr__(self, "samples", s)

    @property
    def height(self):
        return self.samples.shape[0]

    @property
    def width(self):
        return self.samples.shape[1]

    @property
    def channels(self):
        return self.samples.shape[2]

    @property
    def dims(self):
        return self.width, self.height

    @classmethod
    def constant(cls, width, height, value, channels=1):
        return cls(np.full((height, width, channels), value, np.float32))


def bilinear_sample(img, x, y):
    """Per-channel bilinear interpolation at continuous (x, y); None outside the image."""
    w, h = img.width, img.height
    if not (0.0 <= x <= w - 1 and 0.0 <= y <= h - 1):
        return None
    i0, i1 = _cell(x, w)
    j0, j1 = _cell(y, h)
    fx = x - i0
    fy = y - j0
    s = img.samples.astype(np.float64)
    return ((1 - fx) * (1 - fy) * s[j0, i0] + fx * (1 - fy) * s[j0, i1]
            + (1 - fx) * fy * s[j1, i0] + fx * fy * s[j1, i1])


def _cell(v, n):
    i0 = min(int(np.floor(v)), max(n - 2, 0))
    return i0, min(i0 + 1, n - 1)


def bilinear_contributions(x, y, width, height):
    """Source indices and weights for bilinear sampling at arrays of positions.

    Returns ``(index (..., 4), weight (..., 4), valid (...))`` where the index
    is the flat pixel index ``row * width + col``. Positions outside
    [0, w-1] x [0, h-1] are invalid; zero weights are allowed in the output.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    valid = (x >= 0.0) & (x <= width - 1) & (y >= 0.0) & (y <= height - 1)
    xc = np.where(valid, x, 0.0)
    yc = np.where(valid, y, 0.0)
    i0 = np.minimum(np.floor(xc).astype(np.int64), max(width - 2, 0))
    j0 = np.minimum(np.floor(yc).astype(np.int64), max(height - 2, 0))
    i1 = np.minimum(i0 + 1, width - 1)
    j1 = np.minimum(j0 + 1, height - 1)
    fx = xc - i0
    fy = yc - j0
    idx = np.stack([j0 * width + i0, j0 * width + i1, j1 * width + i0, j1 * width + i1], axis=-1)
    wts = np.stack([(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy], axis=-1)
    return idx, wts, valid


def read_image(path):
    path = Path(path)
    if path.suffix.lower() not in SUPPORTED_SUFFIXES:
        raise ValueError(f"unsupported image format: {path}")
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB" if im.mode in ("RGBA", "P", "CMYK", "YCbCr") else "L")
        return RasterImage(np.asarray(im, dtype=np.float32))


def to_uint8(img):
    return np.clip(np.rint(img.samples), 0, 255).astype(np.uint8)


def write_image(path, img):
    path = Path(path)
    if path.suffix.lower() not in SUPPORTED_SUFFIXES:
        raise ValueError(f"unsupported image format: {path}")
    data = to_uint8(img)
    if data.shape[2] == 1:
        im = Image.fromarray(data[:, :, 0], mode="L")
    else:
        im = Image.fromarray(data, mode="RGB")
    im.save(path)


def mask_path(path):
    """Sidecar path of the validity mask that accompanies an image: ``foo.mask.pgm``."""
    path = Path(path)
    return path.with_name(path.stem + ".mask.pgm")


def write_mask(path, mask):
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(path, format="PPM")


def read_mask(path):
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) > 127
