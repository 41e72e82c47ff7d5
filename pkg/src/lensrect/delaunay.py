"""Delaunay triangulation, point location and piecewise-linear interpolation.

The triangulation is built by incremental Bowyer-Watson insertion. Instead of
a finite super-triangle, hull edges are closed off with "ghost" triangles that
share a single vertex at infinity, so the result covers exactly the convex
hull even when hull points are collinear (pixel rows, for instance).
"""

from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from .errors import DegenerateInputError
from .predicates import incircle, orient2d

GHOST = -1
DUPLICATE_TOL = 1e-9
_BLOCK_ROWS = 16


@njit(cache=True)
def _in_conflict(xs, ys, a, b, c, px, py):
    """Bowyer-Watson conflict test for triangle (a, b, c), possibly a ghost."""
    if a == GHOST:
        a, b = b, c
    elif b == GHOST:
        a, b = c, a
    elif c != GHOST:
        return incircle(xs[a], ys[a], xs[b], ys[b], xs[c], ys[c], px, py) > 0.0
    o = orient2d(xs[a], ys[a], xs[b], ys[b], px, py)
    if o != 0.0:
        return o > 0.0
    # collinear with the hull edge: conflict only on the open segment
    if xs[a] != xs[b]:
        lo, hi = min(xs[a], xs[b]), max(xs[a], xs[b])
        return lo < px < hi
    lo, hi = min(ys[a], ys[b]), max(ys[a], ys[b])
    return lo < py < hi


@njit(cache=True)
def _walk_to_conflict(xs, ys, V, N, t, px, py):
    rot = 0
    while True:
        g = -1
        for k in range(3):
            if V[t, k] == GHOST:
                g = k
        if g >= 0:
            if _in_conflict(xs, ys, V[t, 0], V[t, 1], V[t, 2], px, py):
                return t
            t = N[t, g]
            continue
        moved = False
        for k in range(3):
            i = (k + rot) % 3
            a = V[t, (i + 1) % 3]
            b = V[t, (i + 2) % 3]
            if orient2d(xs[a], ys[a], xs[b], ys[b], px, py) < 0.0:
                t = N[t, i]
                moved = True
                break
        rot = (rot + 1) % 3
        if not moved:
            return t


@njit(cache=True)
def _bowyer_watson(xs, ys, seq):
    """Insert points seq[0], seq[1], ... ; seq[:3] must be non-collinear.

    Returns (V, N, kept) where V/N hold all triangles including ghosts.
    """
    n = xs.shape[0]
    cap = 2 * seq.shape[0] + 8
    V = np.full((cap, 3), GHOST, np.int64)
    N = np.full((cap, 3), -1, np.int64)
    kept = np.zeros(n, np.bool_)

    a, b, c = seq[0], seq[1], seq[2]
    if orient2d(xs[a], ys[a], xs[b], ys[b], xs[c], ys[c]) < 0.0:
        b, c = c, b
    V[0, 0], V[0, 1], V[0, 2] = a, b, c
    V[1, 0], V[1, 1] = b, a
    V[2, 0], V[2, 1] = c, b
    V[3, 0], V[3, 1] = a, c
    N[0, 0], N[0, 1], N[0, 2] = 2, 3, 1
    N[1, 0], N[1, 1], N[1, 2] = 3, 2, 0
    N[2, 0], N[2, 1], N[2, 2] = 1, 3, 0
    N[3, 0], N[3, 1], N[3, 2] = 2, 1, 0
    kept[a] = kept[b] = kept[c] = True
    ntri = 4

    mark = np.zeros(cap, np.int64)
    stamp = 0
    stack = np.empty(cap, np.int64)
    cavity = np.empty(cap, np.int64)
    e_a = np.empty(cap, np.int64)
    e_b = np.empty(cap, np.int64)
    e_o = np.empty(cap, np.int64)
    start_of = np.full(n + 1, -1, np.int64)
    end_of = np.full(n + 1, -1, np.int64)
    tol2 = DUPLICATE_TOL * DUPLICATE_TOL

    last = 0
    for s in range(3, seq.shape[0]):
        p = seq[s]
        px, py = xs[p], ys[p]
        t = _walk_to_conflict(xs, ys, V, N, last, px, py)

        dup = False
        for k in range(3):
            v = V[t, k]
            if v != GHOST:
                dx = xs[v] - px
                dy = ys[v] - py
                if dx * dx + dy * dy <= tol2:
                    dup = True
        if dup:
            continue
        kept[p] = True

        stamp += 1
        mark[t] = stamp
        sp = 0
        stack[sp] = t
        sp += 1
        nc = 0
        ne = 0
        while sp > 0:
            sp -= 1
            t = stack[sp]
            cavity[nc] = t
            nc += 1
            for i in range(3):
                o = N[t, i]
                if mark[o] == stamp:
                    continue
                if mark[o] != -stamp and _in_conflict(
                        xs, ys, V[o, 0], V[o, 1], V[o, 2], px, py):
                    mark[o] = stamp
                    stack[sp] = o
                    sp += 1
                else:
                    mark[o] = -stamp
                    e_a[ne] = V[t, (i + 1) % 3]
                    e_b[ne] = V[t, (i + 2) % 3]
                    e_o[ne] = o
                    ne += 1

        for j in range(ne):
            if j < nc:
                m = cavity[j]
            else:
                m = ntri
                ntri += 1
            ea, eb, o = e_a[j], e_b[j], e_o[j]
            V[m, 0], V[m, 1], V[m, 2] = ea, eb, p
            N[m, 2] = o
            for k in range(3):
                if V[o, k] != ea and V[o, k] != eb:
                    N[o, k] = m
            start_of[ea + 1] = m
            end_of[eb + 1] = m
        for j in range(ne):
            m = cavity[j] if j < nc else ntri - (ne - j)
            N[m, 0] = start_of[V[m, 1] + 1]
            N[m, 1] = end_of[V[m, 0] + 1]
        last = cavity[0]
    return V[:ntri], N[:ntri], kept


def _hilbert_order(points):
    """Stable permutation sorting points along a Hilbert curve."""
    lo = points.min(axis=0)
    span = max(float((points.max(axis=0) - lo).max()), 1e-300)
    side = 1 << 16
    q = np.clip(((points - lo) / span * (side - 1)).astype(np.int64), 0, side - 1)
    x, y = q[:, 0].copy(), q[:, 1].copy()
    d = np.zeros(len(points), np.int64)
    s = side // 2
    while s > 0:
        rx = (x & s) > 0
        ry = (y & s) > 0
        d += s * s * ((3 * rx) ^ ry)
        flip = ~ry
        swap_x = np.where(flip & rx, side - 1 - x, x)
        swap_y = np.where(flip & rx, side - 1 - y, y)
        x = np.where(flip, swap_y, swap_x)
        y = np.where(flip, swap_x, swap_y)
        s //= 2
    return np.argsort(d, kind="stable")


@dataclass(frozen=True)
class Barycentric:
    triangle: int
    vertices: tuple
    weights: tuple


@dataclass(frozen=True, eq=False)
class Triangulation:
    """Delaunay triangulation of ``points``.

    ``triangles`` holds counter-clockwise index triples into ``points`` (so an
    index also identifies the source sample that produced the vertex).
    ``neighbors[t, i]`` is the triangle across the edge opposite vertex ``i``,
    or -1 on the hull. Points dropped as near-duplicates have ``kept`` False.
    """

    points: np.ndarray
    triangles: np.ndarray
    neighbors: np.ndarray
    kept: np.ndarray = field(repr=False)

    def locate(self, q, hint=None):
        """Containing triangle and barycentric weights, or None outside the hull."""
        start = 0 if hint is None else int(hint)
        t = _locate(self.points[:, 0], self.points[:, 1], self.triangles,
                    self.neighbors, start, float(q[0]), float(q[1]))
        if t < 0:
            return None
        w = _weights(self.points[:, 0], self.points[:, 1], self.triangles, t,
                     float(q[0]), float(q[1]))
        return Barycentric(int(t), tuple(int(v) for v in self.triangles[t]),
                           tuple(float(x) for x in w))

    def interpolate(self, values, q, hint=None):
        """Piecewise-linear interpolant of per-vertex ``values`` at ``q``; None outside."""
        loc = self.locate(q, hint)
        if loc is None:
            return None
        values = np.asarray(values, dtype=np.float64)
        return float(sum(w * values[v] for v, w in zip(loc.vertices, loc.weights)))

    def locate_grid(self, width, height):
        """Locate every integer pixel of a ``width`` x ``height`` grid.

        Returns (vertex indices (h, w, 3), weights (h, w, 3), valid (h, w)).
        Rows are processed in fixed blocks so the result does not depend on the
        number of threads.
        """
        return _locate_grid(self.points[:, 0], self.points[:, 1], self.triangles,
                            self.neighbors, int(width), int(height))


def triangulate(points):
    """Delaunay-triangulate an (n, 2) array of positions."""
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must have shape (n, 2)")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    if len(pts) < 3:
        raise DegenerateInputError(f"need at least 3 points, got {len(pts)}")

    _, first = np.unique(pts, axis=0, return_index=True)
    unique = np.zeros(len(pts), bool)
    unique[first] = True
    cand = np.flatnonzero(unique)
    order = cand[_hilbert_order(pts[cand])]

    seq = _seed_sequence(pts[:, 0], pts[:, 1], order)
    if seq is None:
        raise DegenerateInputError("all points are collinear")
    V, N, kept = _bowyer_watson(pts[:, 0], pts[:, 1], seq)

    real = np.all(V != GHOST, axis=1)
    remap = np.full(len(V), -1, np.int64)
    remap[real] = np.arange(int(real.sum()))
    tris = V[real]
    nbrs = N[real]
    nbrs = np.where(nbrs >= 0, remap[np.maximum(nbrs, 0)], -1)
    return Triangulation(pts, np.ascontiguousarray(tris),
                         np.ascontiguousarray(nbrs), kept)


def _seed_sequence(xs, ys, order):
    a = order[0]
    rest = order[1:]
    diff = (xs[rest] != xs[a]) | (ys[rest] != ys[a])
    if not diff.any():
        return None
    ib = int(np.argmax(diff))
    b = rest[ib]
    for ic in range(ib + 1, len(rest)):
        c = rest[ic]
        if orient2d(xs[a], ys[a], xs[b], ys[b], xs[c], ys[c]) != 0.0:
            others = np.delete(rest, [ib, ic])
            return np.concatenate(([a, b, c], others)).astype(np.int64)
    return None


@njit(cache=True)
def _locate(xs, ys, T, N, t, px, py):
    if T.shape[0] == 0:
        return -1
    rot = 0
    while True:
        moved = False
        for k in range(3):
            i = (k + rot) % 3
            a = T[t, (i + 1) % 3]
            b = T[t, (i + 2) % 3]
            if orient2d(xs[a], ys[a], xs[b], ys[b], px, py) < 0.0:
                t = N[t, i]
                if t < 0:
                    return -1
                moved = True
                break
        rot = (rot + 1) % 3
        if not moved:
            return t


@njit(cache=True)
def _weights(xs, ys, T, t, px, py):
    a, b, c = T[t, 0], T[t, 1], T[t, 2]
    w = np.empty(3)
    area = (xs[b] - xs[a]) * (ys[c] - ys[a]) - (ys[b] - ys[a]) * (xs[c] - xs[a])
    w[0] = ((xs[b] - px) * (ys[c] - py) - (ys[b] - py) * (xs[c] - px)) / area
    w[1] = ((xs[c] - px) * (ys[a] - py) - (ys[c] - py) * (xs[a] - px)) / area
    w[2] = ((xs[a] - px) * (ys[b] - py) - (ys[a] - py) * (xs[b] - px)) / area
    total = 0.0
    for k in range(3):
        if w[k] < 0.0:
            w[k] = 0.0
        total += w[k]
    for k in range(3):
        w[k] /= total
    return w


@njit(cache=True, parallel=True)
def _locate_grid(xs, ys, T, N, width, height):
    verts = np.full((height, width, 3), -1, np.int64)
    wts = np.zeros((height, width, 3))
    valid = np.zeros((height, width), np.bool_)
    nblocks = (height + _BLOCK_ROWS - 1) // _BLOCK_ROWS
    for blk in prange(nblocks):
        hint = 0
        for y in range(blk * _BLOCK_ROWS, min(height, (blk + 1) * _BLOCK_ROWS)):
            for x in range(width):
                t = _locate(xs, ys, T, N, hint, float(x), float(y))
                if t < 0:
                    continue
                hint = t
                w = _weights(xs, ys, T, t, float(x), float(y))
                for k in range(3):
                    verts[y, x, k] = T[t, k]
                    wts[y, x, k] = w[k]
                valid[y, x] = True
    return verts, wts, valid
