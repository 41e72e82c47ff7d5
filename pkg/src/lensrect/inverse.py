"""Approximating the forward mapping when only inverse parameters are known.

Two strategies:

* per-radius Newton-Raphson root finding on ``r + k1' r^3 + k2' r^5 - r_u``,
  started from ``r_u``;
* a global fit of the six-coefficient rational model
  ``p_d = p_u - p_u * (a1 r^2 + a2 r^4 + a3 r^6 + a4 r^8) / (1 + 4 a5 r^2 + 6 a6 r^4)``
  with ``r = |p_u|``, trained on distorted pixels pushed through the inverse model.
"""

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .distortion import (Direction, DistortionCenter, NormalizedPoint,
                         RadialPolyParams, map_points)
from .errors import (DegenerateDerivativeError, DenominatorSignError,
                     FitDegenerateError, NewtonDivergenceError)

log = logging.getLogger(__name__)

DERIVATIVE_FLOOR = 1e-12


class NewtonMode(enum.Enum):
    SINGLE = "single"
    CONVERGE = "converge"


@dataclass(frozen=True)
class NewtonConfig:
    max_iterations: int = 20
    tolerance: float = 1e-8
    mode: NewtonMode = NewtonMode.CONVERGE

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")

    def as_dict(self):
        return {"max_iterations": self.max_iterations, "tolerance": self.tolerance,
                "mode": self.mode.value}


SINGLE_ITERATION = NewtonConfig(mode=NewtonMode.SINGLE)


def _residual(r, ru, k1, k2):
    r2 = r * r
    return r * (1.0 + k1 * r2 + k2 * r2 * r2) - ru


def _slope(r, k1, k2):
    r2 = r * r
    return 1.0 + 3.0 * k1 * r2 + 5.0 * k2 * r2 * r2


def newton_iterates(r_u, k1, k2):
    """Yield the Newton iterates r_0 = r_u, r_1, r_2, ... for the inverse model."""
    r = float(r_u)
    while True:
        yield r
        d = _slope(r, k1, k2)
        if abs(d) < DERIVATIVE_FLOOR:
            raise DegenerateDerivativeError(f"f'(r) = {d} at r = {r}")
        r -= _residual(r, r_u, k1, k2) / d


def newton_invert_radius(r_u, inv, cfg=NewtonConfig()):
    """Distorted radius whose inverse-model image is ``r_u``.

    Returns ``(r_d, iterations)``. In single-iteration mode exactly one update
    is made; otherwise iteration stops once ``|f(r_d)| < cfg.tolerance``.
    """
    inv.require(Direction.INVERSE)
    if r_u < 0:
        raise ValueError(f"r_u must be non-negative, got {r_u}")
    steps = newton_iterates(r_u, inv.k1, inv.k2)
    next(steps)
    if cfg.mode is NewtonMode.SINGLE:
        return next(steps), 1
    r = float(r_u)
    for it in range(cfg.max_iterations + 1):
        f = _residual(r, r_u, inv.k1, inv.k2)
        if abs(f) < cfg.tolerance:
            return r, it
        if it == cfg.max_iterations:
            break
        r = next(steps)
    raise NewtonDivergenceError(
        f"no convergence for r_u={r_u} after {cfg.max_iterations} iterations (|f|={abs(f):.3g})")


def newton_invert_radii(r_u, inv, cfg=NewtonConfig()):
    """Array version of :func:`newton_invert_radius` that never raises.

    Returns ``(r_d, iterations, ok)``; ``ok`` is False where the iteration
    diverged or hit a vanishing derivative.
    """
    inv.require(Direction.INVERSE)
    ru = np.asarray(r_u, dtype=np.float64)
    k1, k2 = inv.k1, inv.k2
    r = ru.copy()
    iters = np.zeros(ru.shape, np.int64)
    ok = np.ones(ru.shape, bool)

    if cfg.mode is NewtonMode.SINGLE:
        d = _slope(r, k1, k2)
        bad = np.abs(d) < DERIVATIVE_FLOOR
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(bad, r, r - _residual(r, ru, k1, k2) / d)
        iters[:] = 1
        ok &= ~bad & np.isfinite(r)
        return r, iters, ok

    active = np.ones(ru.shape, bool)
    for _ in range(cfg.max_iterations + 1):
        f = _residual(r, ru, k1, k2)
        active &= ~(np.abs(f) < cfg.tolerance)
        if not active.any():
            break
        d = _slope(r, k1, k2)
        bad = active & (np.abs(d) < DERIVATIVE_FLOOR)
        ok &= ~bad
        active &= ~bad
        step = np.zeros_like(r)
        np.divide(f, d, out=step, where=active)
        r = r - step
        iters += active
    f = _residual(r, ru, k1, k2)
    ok &= np.abs(f) < cfg.tolerance
    return r, iters, ok


def newton_map_point(p_u, inv, cfg=NewtonConfig()):
    """Distorted position of the undistorted normalized point ``p_u``."""
    r_u = p_u.radius()
    if r_u == 0.0:
        inv.require(Direction.INVERSE)
        return p_u
    r_d, _ = newton_invert_radius(r_u, inv, cfg)
    s = r_d / r_u
    return NormalizedPoint(p_u.x * s, p_u.y * s)


def newton_map_points(xy, inv, cfg=NewtonConfig()):
    """Vectorised ``newton_map_point``; returns ``(xy_d, iterations, ok)``."""
    xy = np.asarray(xy, dtype=np.float64)
    r_u = np.hypot(xy[..., 0], xy[..., 1])
    r_d, iters, ok = newton_invert_radii(r_u, inv, cfg)
    s = np.ones_like(r_u)
    np.divide(r_d, r_u, out=s, where=r_u > 0)
    return xy * s[..., None], iters, ok


@dataclass(frozen=True)
class RationalInverseParams:
    """Coefficients a1..a6 of the rational model (units pix^-2 ... pix^-8)."""

    alpha: tuple
    center: DistortionCenter
    rms_residual: float = float("nan")
    radius_range: float = 0.0
    history: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if len(self.alpha) != 6:
            raise ValueError("alpha must have six coefficients")

    def denominator(self, r):
        r2 = np.square(r)
        return 1.0 + 4.0 * self.alpha[4] * r2 + 6.0 * self.alpha[5] * r2 * r2

    def check_denominator(self, r_max):
        """Raise DenominatorSignError unless the denominator is positive on [0, r_max]."""
        if _min_denominator(self.alpha[4], self.alpha[5], r_max * r_max) <= 0.0:
            raise DenominatorSignError(
                f"rational denominator is not positive on [0, {r_max:.6g}] px")

    def as_dict(self):
        return {"alpha": list(self.alpha), "cx": self.center.cx, "cy": self.center.cy,
                "rms_residual": self.rms_residual, "radius_range": self.radius_range}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(float(a) for a in d["alpha"]),
                   DistortionCenter(float(d["cx"]), float(d["cy"])),
                   float(d.get("rms_residual", float("nan"))),
                   float(d.get("radius_range", 0.0)))


def _min_denominator(a5, a6, s_max):
    # 1 + 4 a5 s + 6 a6 s^2 over s = r^2 in [0, s_max]
    cands = [0.0, s_max]
    if a6 != 0.0:
        s_star = -4.0 * a5 / (12.0 * a6)
        if 0.0 < s_star < s_max:
            cands.append(s_star)
    return min(1.0 + 4.0 * a5 * s + 6.0 * a6 * s * s for s in cands)


def rational_map_points(xy, params):
    xy = np.asarray(xy, dtype=np.float64)
    a = params.alpha
    r2 = xy[..., 0] ** 2 + xy[..., 1] ** 2
    num = r2 * (a[0] + r2 * (a[1] + r2 * (a[2] + r2 * a[3])))
    den = 1.0 + 4.0 * a[4] * r2 + 6.0 * a[5] * r2 * r2
    if np.any(den <= 0.0):
        raise DenominatorSignError("rational denominator is not positive at some input radius")
    return xy - xy * (num / den)[..., None]


def rational_map_point(p, params):
    out = rational_map_points(np.array([p.x, p.y]), params)
    return NormalizedPoint(float(out[0]), float(out[1]))


def fit_samples(inv, width, height, stride=1, offset=0):
    """Training pairs (undistorted, distorted) from every ``stride``-th distorted pixel."""
    inv.require(Direction.INVERSE)
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if width < 1 or height < 1:
        raise ValueError("domain must be nonempty")
    xs = np.arange(offset, width, stride, dtype=np.float64) - inv.center.cx
    ys = np.arange(offset, height, stride, dtype=np.float64) - inv.center.cy
    gx, gy = np.meshgrid(xs, ys)
    p_d = np.stack([gx.ravel(), gy.ravel()], axis=1)
    return map_points(p_d, inv), p_d


_CHUNK = 1 << 16


def _design(p_u, p_d, s):
    """Rows of the linearised system in the scaled variables b_k (a_k = b_k / s^m)."""
    rho = (p_u[:, 0] ** 2 + p_u[:, 1] ** 2) / s
    rows = []
    for c in (0, 1):
        u = p_u[:, c]
        e = p_d[:, c] - u
        rows.append(np.stack([u * rho, u * rho ** 2, u * rho ** 3, u * rho ** 4,
                              4.0 * e * rho, 6.0 * e * rho ** 2, -e], axis=1))
    return np.concatenate(rows)


def _accumulate_r(blocks):
    """Triangular factor of a tall matrix given as an iterator of row blocks."""
    R = None
    for block in blocks:
        stacked = block if R is None else np.vstack([R, block])
        R = np.linalg.qr(stacked, mode="r")
    return R


def _model(beta, p_u, s):
    rho = (p_u[:, 0] ** 2 + p_u[:, 1] ** 2) / s
    num = rho * (beta[0] + rho * (beta[1] + rho * (beta[2] + rho * beta[3])))
    den = 1.0 + 4.0 * beta[4] * rho + 6.0 * beta[5] * rho ** 2
    return rho, num, den


def _sse(beta, p_u, p_d, s):
    total = 0.0
    for i in range(0, len(p_u), _CHUNK):
        u, d = p_u[i:i + _CHUNK], p_d[i:i + _CHUNK]
        _, num, den = _model(beta, u, s)
        pred = u - u * (num / den)[:, None]
        total += float(np.sum((pred - d) ** 2))
    return total


def _normal_equations(beta, p_u, p_d, s):
    JtJ = np.zeros((6, 6))
    Jtr = np.zeros(6)
    for i in range(0, len(p_u), _CHUNK):
        u, d = p_u[i:i + _CHUNK], p_d[i:i + _CHUNK]
        rho, num, den = _model(beta, u, s)
        q = num / den
        res = (u - u * q[:, None]) - d
        dq = np.stack([rho / den, rho ** 2 / den, rho ** 3 / den, rho ** 4 / den,
                       -q * 4.0 * rho / den, -q * 6.0 * rho ** 2 / den], axis=1)
        for c in (0, 1):
            J = -u[:, c:c + 1] * dq
            JtJ += J.T @ J
            Jtr += J.T @ res[:, c]
    return JtJ, Jtr


def fit_rational_inverse(inv, width, height, stride=1, refine_steps=10, rel_tol=1e-10):
    """Fit the rational model so that it maps undistorted to distorted points.

    The linearised least-squares problem (multiply through by the denominator)
    is solved in closed form, then refined with damped Gauss-Newton on the true
    residual. Returns :class:`RationalInverseParams` whose ``rms_residual`` is the
    root-mean-square point error in pixels over the training samples and whose
    ``history`` lists the sum of squared residuals after each accepted step.
    """
    p_u, p_d = fit_samples(inv, width, height, stride)
    n = len(p_u)
    r2max = float(np.max(p_u[:, 0] ** 2 + p_u[:, 1] ** 2))
    if r2max == 0.0:
        raise FitDegenerateError("all samples lie on the distortion center")
    s = r2max

    R = _accumulate_r(_design(p_u[i:i + _CHUNK], p_d[i:i + _CHUNK], s)
                      for i in range(0, n, _CHUNK))
    A, b = R[:6, :6], R[:6, 6]
    beta, _, rank, _ = np.linalg.lstsq(A, b, rcond=1e-12)
    sse = _sse(beta, p_u, p_d, s)
    if rank < 6 and math.sqrt(sse / n) > 1e-9:
        raise FitDegenerateError(f"linearised system has rank {rank} < 6")
    if _min_denominator(beta[4], beta[5], 1.0) <= 0.0:
        # warm start from the polynomial-only model (denominator fixed at 1)
        beta = np.zeros(6)
        beta[:4] = np.linalg.lstsq(R[:, :4], R[:, 6], rcond=1e-12)[0]
        sse = _sse(beta, p_u, p_d, s)

    history = [sse]
    lam = 1e-3
    for _ in range(refine_steps):
        if sse == 0.0:
            break
        JtJ, Jtr = _normal_equations(beta, p_u, p_d, s)
        improved = False
        for _ in range(12):
            H = JtJ + lam * np.diag(np.maximum(np.diag(JtJ), 1e-300))
            try:
                step = np.linalg.solve(H, -Jtr)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            cand = beta + step
            if _min_denominator(cand[4], cand[5], 1.0) > 0.0:
                cand_sse = _sse(cand, p_u, p_d, s)
                if cand_sse < sse:
                    improved = True
                    break
            lam *= 10.0
        if not improved:
            break
        change = (sse - cand_sse) / sse
        beta, sse = cand, cand_sse
        history.append(sse)
        lam = max(lam / 10.0, 1e-12)
        if change < rel_tol:
            break

    if _min_denominator(beta[4], beta[5], 1.0) <= 0.0:
        raise DenominatorSignError("fitted denominator is not positive on the sample range")
    alpha = tuple(float(beta[k] / s ** m) for k, m in enumerate((1, 2, 3, 4, 1, 2)))
    rms = math.sqrt(sse / n)
    log.debug("rational fit: %d samples, rms %.3g px, %d refinement steps",
              n, rms, len(history) - 1)
    return RationalInverseParams(alpha, inv.center, rms, math.sqrt(r2max), tuple(history))
