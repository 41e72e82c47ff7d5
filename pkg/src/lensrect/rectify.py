"""Rectification maps (lookup tables), their application, and distortion synthesis.

A map lists, for every output pixel, up to four (source pixel, weight) pairs.
Geometry is computed once per distortion model; applying the map to any number
of images is then a gather and a weighted sum.
"""

import enum
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .delaunay import triangulate
from .distortion import Direction, map_points, pixel_grid
from .errors import CorruptMapError, DimensionMismatchError
from .image import RasterImage, bilinear_contributions
from .inverse import NewtonConfig, NewtonMode, newton_map_points, rational_map_points

MAGIC = b"LDRM"
VERSION = 1
_HEADER = struct.Struct("<4sHBIIII")
MAX_CONTRIBUTIONS = 4


class Method(enum.IntEnum):
    FORWARD_BILINEAR = 0
    NEWTON_SINGLE = 1
    NEWTON_CONVERGED = 2
    RATIONAL_BILINEAR = 3
    TRIANGULATION_LINEAR = 4

    @property
    def cli_name(self):
        return _CLI_NAMES[self]

    @classmethod
    def from_cli(cls, name):
        for m, n in _CLI_NAMES.items():
            if n == name:
                return m
        raise ValueError(f"unknown method {name!r}; choose from {', '.join(_CLI_NAMES.values())}")


_CLI_NAMES = {
    Method.FORWARD_BILINEAR: "forward",
    Method.NEWTON_SINGLE: "newton1",
    Method.NEWTON_CONVERGED: "newton",
    Method.RATIONAL_BILINEAR: "rational",
    Method.TRIANGULATION_LINEAR: "triangulation",
}


@dataclass(frozen=True, eq=False)
class RectificationMap:
    """Per-output-pixel contributions from a source image.

    ``index`` and ``weight`` have shape (out_height * out_width, 4); the first
    ``count[i]`` columns of row ``i`` are used, the rest hold -1 / 0. A count
    of zero marks an invalid output pixel.
    """

    out_width: int
    out_height: int
    src_width: int
    src_height: int
    method: Method
    count: np.ndarray
    index: np.ndarray
    weight: np.ndarray
    params: dict = field(default_factory=dict)

    @property
    def valid(self):
        return (self.count > 0).reshape(self.out_height, self.out_width)

    def entry(self, i):
        """List of (source index, weight) pairs of output pixel ``i`` (flat)."""
        c = int(self.count[i])
        return [(int(self.index[i, k]), float(self.weight[i, k])) for k in range(c)]

    def same_as(self, other):
        return (self.out_width == other.out_width and self.out_height == other.out_height
                and self.src_width == other.src_width and self.src_height == other.src_height
                and self.method == other.method
                and np.array_equal(self.count, other.count)
                and np.array_equal(self.index, other.index)
                and np.array_equal(self.weight.view(np.uint32), other.weight.view(np.uint32)))


def _pack(index, weight, valid, out_dims, src_dims, method, params):
    """Compact non-zero contributions to the front of each row."""
    n = out_dims[0] * out_dims[1]
    k = index.shape[-1]
    index = index.reshape(n, k)
    weight = weight.reshape(n, k)
    valid = valid.reshape(n)
    keep = valid[:, None] & (weight > 0.0)
    # stable: kept columns first, original order preserved
    order = np.argsort(~keep, axis=1, kind="stable")
    index = np.take_along_axis(index, order, axis=1)
    weight = np.take_along_axis(weight, order, axis=1)
    keep = np.take_along_axis(keep, order, axis=1)
    count = keep.sum(axis=1).astype(np.uint8)
    idx = np.full((n, MAX_CONTRIBUTIONS), -1, np.int64)
    wts = np.zeros((n, MAX_CONTRIBUTIONS), np.float32)
    idx[:, :k] = np.where(keep, index, -1)
    wts[:, :k] = np.where(keep, weight, 0.0).astype(np.float32)
    return RectificationMap(out_dims[0], out_dims[1], src_dims[0], src_dims[1],
                            Method(method), count, idx, wts, dict(params))


def _resolve_dims(src_dims, out_dims):
    src_dims = (int(src_dims[0]), int(src_dims[1]))
    out_dims = src_dims if out_dims is None else (int(out_dims[0]), int(out_dims[1]))
    if min(src_dims) < 1 or min(out_dims) < 1:
        raise ValueError("image dimensions must be positive")
    return src_dims, out_dims


def _normalized_grid(dims, center):
    g = pixel_grid(*dims)
    g[..., 0] -= center.cx
    g[..., 1] -= center.cy
    return g


def _to_screen(xy, center):
    out = xy.copy()
    out[..., 0] += center.cx
    out[..., 1] += center.cy
    return out


def forward_positions(fwd, out_dims):
    """Distorted source positions of each rectified pixel under forward params."""
    fwd.require(Direction.FORWARD)
    xy = map_points(_normalized_grid(out_dims, fwd.center), fwd)
    return _to_screen(xy, fwd.center)


def newton_positions(inv, cfg, out_dims):
    """Returns (positions (h, w, 2), ok (h, w), iterations (h, w))."""
    xy, iters, ok = newton_map_points(_normalized_grid(out_dims, inv.center), inv, cfg)
    return _to_screen(xy, inv.center), ok, iters


def rational_positions(fit, out_dims):
    g = _normalized_grid(out_dims, fit.center)
    fit.check_denominator(float(np.sqrt(np.max(np.sum(g ** 2, axis=-1)))))
    return _to_screen(rational_map_points(g, fit), fit.center)


def build_map_from_positions(positions, src_dims, method=Method.FORWARD_BILINEAR,
                             params=None, ok=None):
    """Bilinear map sampling the source at given (h, w, 2) screen positions."""
    h, w = positions.shape[:2]
    idx, wts, valid = bilinear_contributions(positions[..., 0], positions[..., 1], *src_dims)
    if ok is not None:
        valid &= ok
    return _pack(idx, wts, valid, (w, h), src_dims, method, params or {})


def build_map_forward(fwd, src_dims, out_dims=None):
    src_dims, out_dims = _resolve_dims(src_dims, out_dims)
    pos = forward_positions(fwd, out_dims)
    return build_map_from_positions(pos, src_dims, Method.FORWARD_BILINEAR, fwd.as_dict())


def build_map_newton(inv, src_dims, cfg=NewtonConfig(), out_dims=None):
    """Bilinear map whose rectified-to-distorted mapping is inverted per pixel by Newton.

    Pixels whose iteration fails are invalid; their number is recorded in
    ``params["newton_failures"]``.
    """
    inv.require(Direction.INVERSE)
    src_dims, out_dims = _resolve_dims(src_dims, out_dims)
    pos, ok, iters = newton_positions(inv, cfg, out_dims)
    method = (Method.NEWTON_SINGLE if cfg.mode is NewtonMode.SINGLE
              else Method.NEWTON_CONVERGED)
    params = dict(inv.as_dict(), newton=cfg.as_dict(),
                  newton_failures=int((~ok).sum()), newton_max_used=int(iters.max()))
    return build_map_from_positions(pos, src_dims, method, params, ok=ok)


def build_map_rational(fit, src_dims, out_dims=None):
    src_dims, out_dims = _resolve_dims(src_dims, out_dims)
    pos = rational_positions(fit, out_dims)
    return build_map_from_positions(pos, src_dims, Method.RATIONAL_BILINEAR, fit.as_dict())


def mapped_source_points(inv, src_dims):
    """Every source (distorted) pixel center pushed through the inverse model.

    Returns screen coordinates of shape (src_h * src_w, 2), row-major, so row
    ``i`` belongs to flat source pixel ``i``.
    """
    inv.require(Direction.INVERSE)
    xy = map_points(_normalized_grid(src_dims, inv.center), inv)
    return _to_screen(xy, inv.center).reshape(-1, 2)


def build_map_triangulation(inv, src_dims, out_dims=None):
    """Map built by triangulating the inverse-mapped source pixels.

    Each output pixel receives the three source pixels at the corners of its
    enclosing triangle with barycentric weights; pixels outside the convex
    hull of the mapped points are invalid.
    """
    inv.require(Direction.INVERSE)
    src_dims, out_dims = _resolve_dims(src_dims, out_dims)
    tri = triangulate(mapped_source_points(inv, src_dims))
    verts, wts, valid = tri.locate_grid(*out_dims)
    params = dict(inv.as_dict(), triangles=int(len(tri.triangles)))
    return _pack(verts, wts, valid, out_dims, src_dims, Method.TRIANGULATION_LINEAR, params)


def apply_map(rmap, src, src_mask=None):
    """Rectify ``src`` with ``rmap``.

    Returns ``(image, mask)``. Invalid output pixels are 0. When ``src_mask``
    is given, an output pixel is also invalid if any contributing source
    pixel is masked out.
    """
    if (src.width, src.height) != (rmap.src_width, rmap.src_height):
        raise DimensionMismatchError(
            f"map expects {rmap.src_width}x{rmap.src_height} source, got {src.width}x{src.height}")
    flat = src.samples.reshape(-1, src.channels).astype(np.float64)
    idx = np.maximum(rmap.index, 0)
    w = rmap.weight.astype(np.float64)
    out = np.zeros((len(idx), src.channels))
    for k in range(MAX_CONTRIBUTIONS):
        out += w[:, k, None] * flat[idx[:, k]]
    valid = rmap.count > 0
    if src_mask is not None:
        sm = np.asarray(src_mask, bool).reshape(-1)
        if sm.size != src.width * src.height:
            raise DimensionMismatchError("source mask does not match source image")
        used = np.arange(MAX_CONTRIBUTIONS)[None, :] < rmap.count[:, None]
        valid &= np.all(sm[idx] | ~used, axis=1)
    out[~valid] = 0.0
    shape = (rmap.out_height, rmap.out_width)
    return (RasterImage(out.reshape(*shape, src.channels).astype(np.float32)),
            valid.reshape(shape))


def apply_synthetic_distortion(src, inv, src_mask=None):
    """Distort ``src`` so that ``inv`` is its exact inverse distortion model.

    Each distorted pixel is pushed through the inverse model into the source
    and sampled bilinearly. Returns ``(image, mask)``; samples that land
    outside the source are 0 and masked.
    """
    inv.require(Direction.INVERSE)
    dims = (src.width, src.height)
    xy = map_points(_normalized_grid(dims, inv.center), inv)
    rmap = build_map_from_positions(_to_screen(xy, inv.center), dims)
    return apply_map(rmap, src, src_mask)


def splat_nearest(inv, src_dims, out_dims=None):
    """Output pixels hit when each source pixel is rounded to its nearest mapped pixel.

    Returns a boolean (h, w) coverage mask; False entries are the voids that
    forward splatting leaves behind.
    """
    src_dims, out_dims = _resolve_dims(src_dims, out_dims)
    pts = np.rint(mapped_source_points(inv, src_dims))
    w, h = out_dims
    inside = (pts[:, 0] >= 0) & (pts[:, 0] <= w - 1) & (pts[:, 1] >= 0) & (pts[:, 1] <= h - 1)
    hit = np.zeros(h * w, bool)
    p = pts[inside].astype(np.int64)
    hit[p[:, 1] * w + p[:, 0]] = True
    return hit.reshape(h, w)


def _sidecar(path):
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_map(path, rmap):
    """Write the binary map file and its JSON parameter sidecar (``<path>.json``)."""
    n = rmap.out_width * rmap.out_height
    count = rmap.count.astype(np.int64)
    sizes = 1 + 8 * count
    offsets = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    body = np.zeros(int(sizes.sum()), np.uint8)
    body[offsets] = rmap.count
    for k in range(MAX_CONTRIBUTIONS):
        sel = np.flatnonzero(count > k)
        if not len(sel):
            break
        base = offsets[sel] + 1 + 8 * k
        ib = rmap.index[sel, k].astype("<u4").view(np.uint8).reshape(-1, 4)
        wb = rmap.weight[sel, k].astype("<f4").view(np.uint8).reshape(-1, 4)
        body[base[:, None] + np.arange(4)] = ib
        body[base[:, None] + 4 + np.arange(4)] = wb
    header = _HEADER.pack(MAGIC, VERSION, int(rmap.method), rmap.out_width,
                          rmap.out_height, rmap.src_width, rmap.src_height)
    assert len(offsets) == n
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body.tobytes())
    meta = {"method": rmap.method.cli_name, "out_width": rmap.out_width,
            "out_height": rmap.out_height, "src_width": rmap.src_width,
            "src_height": rmap.src_height, "params": rmap.params}
    _sidecar(path).write_text(json.dumps(meta, indent=2, default=str))


@njit(cache=True)
def _scan_entries(buf, n):
    """Entry counts and byte offsets; returns end position or -1 if truncated."""
    count = np.zeros(n, np.uint8)
    offsets = np.zeros(n, np.int64)
    pos = 0
    for i in range(n):
        if pos >= buf.size:
            return count, offsets, -1, i
        c = buf[pos]
        if c > 4 or pos + 1 + 8 * c > buf.size:
            return count, offsets, -1, i
        count[i] = c
        offsets[i] = pos
        pos += 1 + 8 * c
    return count, offsets, pos, n


def load_map(path):
    """Read a map file written by :func:`save_map`; raises CorruptMapError on bad data."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CorruptMapError(f"corrupt map {path}: truncated header")
    magic, version, tag, ow, oh, sw, sh = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CorruptMapError(f"corrupt map {path}: bad magic {magic!r}")
    if version != VERSION:
        raise CorruptMapError(f"corrupt map {path}: unsupported version {version}")
    try:
        method = Method(tag)
    except ValueError:
        raise CorruptMapError(f"corrupt map {path}: unknown method tag {tag}") from None
    body = np.frombuffer(data, np.uint8, offset=_HEADER.size).copy()
    n = ow * oh
    count, offsets, end, at = _scan_entries(body, n)
    if end < 0:
        raise CorruptMapError(f"corrupt map {path}: truncated at entry {at}")
    if end != body.size:
        raise CorruptMapError(f"corrupt map {path}: {body.size - end} trailing bytes")
    idx = np.full((n, MAX_CONTRIBUTIONS), -1, np.int64)
    wts = np.zeros((n, MAX_CONTRIBUTIONS), np.float32)
    for k in range(MAX_CONTRIBUTIONS):
        sel = np.flatnonzero(count > k)
        base = offsets[sel] + 1 + 8 * k
        raw = body[base[:, None] + np.arange(8)]
        idx[sel, k] = np.ascontiguousarray(raw[:, :4]).view("<u4").ravel()
        wts[sel, k] = np.ascontiguousarray(raw[:, 4:]).view("<f4").ravel()
    if np.any(idx >= sw * sh):
        raise CorruptMapError(f"corrupt map {path}: source index out of range")
    params = {}
    side = _sidecar(path)
    if side.exists():
        params = json.loads(side.read_text()).get("params", {})
    return RectificationMap(ow, oh, sw, sh, method, count, idx, wts, params)

