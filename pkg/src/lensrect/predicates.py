"""Exact-sign orientation and in-circle predicates.

Each predicate first evaluates the determinant in plain floating point and
accepts the result when it clears a forward error bound. Otherwise the
determinant is recomputed exactly with floating-point expansion arithmetic
(two-sum / two-product with zero elimination), so the returned value always
has the correct sign. Magnitudes are only meaningful on the fast path.
Like any expansion scheme this assumes no intermediate product underflows,
which holds for coordinates well away from the subnormal range.
"""

import numpy as np
from numba import njit

_EPS = 2.0 ** -53
_SPLITTER = 2.0 ** 27 + 1.0
_CCW_BOUND = (3.0 + 16.0 * _EPS) * _EPS
_ICC_BOUND = (10.0 + 96.0 * _EPS) * _EPS


@njit(cache=True, inline="always")
def _two_sum(a, b):
    x = a + b
    bv = x - a
    av = x - bv
    return x, (a - av) + (b - bv)


@njit(cache=True, inline="always")
def _fast_two_sum(a, b):
    # requires |a| >= |b|
    x = a + b
    return x, b - (x - a)


@njit(cache=True, inline="always")
def _two_diff(a, b):
    x = a - b
    bv = a - x
    av = x + bv
    return x, (a - av) + (bv - b)


@njit(cache=True, inline="always")
def _split(a):
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


@njit(cache=True, inline="always")
def _two_product(a, b):
    x = a * b
    ahi, alo = _split(a)
    bhi, blo = _split(b)
    err = x - ahi * bhi
    err -= alo * bhi
    err -= ahi * blo
    return x, alo * blo - err


@njit(cache=True)
def _grow(e, elen, b, h):
    # h may alias e
    q = b
    hlen = 0
    for i in range(elen):
        q, hh = _two_sum(q, e[i])
        if hh != 0.0:
            h[hlen] = hh
            hlen += 1
    if q != 0.0 or hlen == 0:
        h[hlen] = q
        hlen += 1
    return hlen


@njit(cache=True)
def _exp_sum(e, elen, f, flen, h):
    for i in range(elen):
        h[i] = e[i]
    hlen = elen
    for j in range(flen):
        hlen = _grow(h, hlen, f[j], h)
    return hlen


@njit(cache=True)
def _scale(e, elen, b, h):
    q, hh = _two_product(e[0], b)
    hlen = 0
    if hh != 0.0:
        h[hlen] = hh
        hlen += 1
    for i in range(1, elen):
        p1, p0 = _two_product(e[i], b)
        s, hh = _two_sum(q, p0)
        if hh != 0.0:
            h[hlen] = hh
            hlen += 1
        q, hh = _fast_two_sum(p1, s)
        if hh != 0.0:
            h[hlen] = hh
            hlen += 1
    if q != 0.0 or hlen == 0:
        h[hlen] = q
        hlen += 1
    return hlen


@njit(cache=True)
def _mul(e, elen, f, flen):
    out = np.empty(2 * elen * flen + 1)
    tmp = np.empty(2 * elen + 1)
    acc = np.empty(2 * elen * flen + 1)
    olen = 0
    for j in range(flen):
        tlen = _scale(e, elen, f[j], tmp)
        if olen == 0:
            for i in range(tlen):
                out[i] = tmp[i]
            olen = tlen
        else:
            olen = _exp_sum(out, olen, tmp, tlen, acc)
            out, acc = acc, out
    return out, olen


@njit(cache=True)
def _diff(a, b):
    x, y = _two_diff(a, b)
    e = np.empty(2)
    if y != 0.0:
        e[0] = y
        e[1] = x
        return e, 2
    e[0] = x
    return e, 1


@njit(cache=True)
def _negate(e, elen):
    for i in range(elen):
        e[i] = -e[i]


@njit(cache=True)
def _add(e, elen, f, flen):
    h = np.empty(elen + flen + 1)
    return h, _exp_sum(e, elen, f, flen, h)


@njit(cache=True)
def _orient_exact(ax, ay, bx, by, cx, cy):
    acx, acxn = _diff(ax, cx)
    acy, acyn = _diff(ay, cy)
    bcx, bcxn = _diff(bx, cx)
    bcy, bcyn = _diff(by, cy)
    left, ln = _mul(acx, acxn, bcy, bcyn)
    right, rn = _mul(acy, acyn, bcx, bcxn)
    _negate(right, rn)
    det, dn = _add(left, ln, right, rn)
    return det[dn - 1]


@njit(cache=True)
def _cross(ux, uxn, uy, uyn, vx, vxn, vy, vyn):
    # ux*vy - uy*vx
    left, ln = _mul(ux, uxn, vy, vyn)
    right, rn = _mul(uy, uyn, vx, vxn)
    _negate(right, rn)
    return _add(left, ln, right, rn)


@njit(cache=True)
def _lift(dx, dxn, dy, dyn):
    xx, xn = _mul(dx, dxn, dx, dxn)
    yy, yn = _mul(dy, dyn, dy, dyn)
    return _add(xx, xn, yy, yn)


@njit(cache=True)
def _incircle_exact(ax, ay, bx, by, cx, cy, dx, dy):
    adx, adxn = _diff(ax, dx)
    ady, adyn = _diff(ay, dy)
    bdx, bdxn = _diff(bx, dx)
    bdy, bdyn = _diff(by, dy)
    cdx, cdxn = _diff(cx, dx)
    cdy, cdyn = _diff(cy, dy)

    bc, bcn = _cross(bdx, bdxn, bdy, bdyn, cdx, cdxn, cdy, cdyn)
    ca, can = _cross(cdx, cdxn, cdy, cdyn, adx, adxn, ady, adyn)
    ab, abn = _cross(adx, adxn, ady, adyn, bdx, bdxn, bdy, bdyn)

    al, aln = _lift(adx, adxn, ady, adyn)
    bl, bln = _lift(bdx, bdxn, bdy, bdyn)
    cl, cln = _lift(cdx, cdxn, cdy, cdyn)

    t1, t1n = _mul(al, aln, bc, bcn)
    t2, t2n = _mul(bl, bln, ca, can)
    t3, t3n = _mul(cl, cln, ab, abn)
    s, sn = _add(t1, t1n, t2, t2n)
    det, dn = _add(s, sn, t3, t3n)
    return det[dn - 1]


@njit(cache=True)
def orient2d(ax, ay, bx, by, cx, cy):
    """Positive if a, b, c turn counter-clockwise, negative if clockwise, zero if collinear."""
    detleft = (ax - cx) * (by - cy)
    detright = (ay - cy) * (bx - cx)
    det = detleft - detright
    bound = _CCW_BOUND * (abs(detleft) + abs(detright))
    if det > bound or -det > bound:
        return det
    return _orient_exact(ax, ay, bx, by, cx, cy)


@njit(cache=True)
def incircle(ax, ay, bx, by, cx, cy, dx, dy):
    """Positive if d lies strictly inside the circle through counter-clockwise a, b, c."""
    adx = ax - dx
    bdx = bx - dx
    cdx = cx - dx
    ady = ay - dy
    bdy = by - dy
    cdy = cy - dy

    bdxcdy = bdx * cdy
    cdxbdy = cdx * bdy
    alift = adx * adx + ady * ady
    cdxady = cdx * ady
    adxcdy = adx * cdy
    blift = bdx * bdx + bdy * bdy
    adxbdy = adx * bdy
    bdxady = bdx * ady
    clift = cdx * cdx + cdy * cdy

    det = (alift * (bdxcdy - cdxbdy)
           + blift * (cdxady - adxcdy)
           + clift * (adxbdy - bdxady))
    permanent = ((abs(bdxcdy) + abs(cdxbdy)) * alift
                 + (abs(cdxady) + abs(adxcdy)) * blift
                 + (abs(adxbdy) + abs(bdxady)) * clift)
    bound = _ICC_BOUND * permanent
    if det > bound or -det > bound:
        return det
    return _incircle_exact(ax, ay, bx, by, cx, cy, dx, dy)
