import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import HD, HD_CORNER, STRONG, WEAK, inverse
from lensrect.distortion import (Direction, DistortionCenter, NormalizedPoint,
                                 RadialPolyParams, map_point, map_points)
from lensrect.errors import (DegenerateDerivativeError, DenominatorSignError,
                             DirectionMismatchError, NewtonDivergenceError)
from lensrect.inverse import (SINGLE_ITERATION, NewtonConfig, NewtonMode,
                              RationalInverseParams, _residual, fit_rational_inverse,
                              fit_samples, newton_invert_radii, newton_invert_radius,
                              newton_iterates, newton_map_point, newton_map_points,
                              rational_map_point, rational_map_points)
from oracles import bisect_radius

ORIGIN = DistortionCenter(0, 0)
STRONG_INV = RadialPolyParams(*STRONG, ORIGIN)


def f_abs(r_d, r_u, p):
    return abs(_residual(r_d, r_u, p.k1, p.k2))


class TestNewtonRadius:
    def test_origin_is_fixed(self):
        r, it = newton_invert_radius(0.0, STRONG_INV)
        assert r == 0.0 and it in (0, 1)
        assert newton_invert_radius(0.0, STRONG_INV, SINGLE_ITERATION) == (0.0, 1)

    def test_round_trip_500(self):
        r_u = 500 * (1 + 1e-11 * 500 ** 2 + 2e-12 * 500 ** 4)
        assert r_u == pytest.approx(562.50125, rel=1e-15)
        r, _ = newton_invert_radius(562.50125, STRONG_INV)
        assert r == pytest.approx(500, abs=1e-6)
        assert r == pytest.approx(bisect_radius(562.50125, *STRONG), abs=1e-6)

    @pytest.mark.parametrize("r_d", [100.0, 500.0, 1101.76])
    def test_strong_within_five_iterations(self, r_d):
        r_u = r_d * (1 + STRONG[0] * r_d ** 2 + STRONG[1] * r_d ** 4)
        r, it = newton_invert_radius(r_u, STRONG_INV)
        assert abs(r - r_d) < 1e-6
        assert it <= 5

    def test_strong_corner_iteration_count(self):
        # corner of 1920x1080 needs more than five updates with these coefficients
        r_u = HD_CORNER * (1 + STRONG[0] * HD_CORNER ** 2 + STRONG[1] * HD_CORNER ** 4)
        r, it = newton_invert_radius(r_u, STRONG_INV)
        assert abs(r - HD_CORNER) < 1e-6
        assert it == 11

    def test_single_iteration_does_one_update(self):
        r_u = 562.50125
        r, it = newton_invert_radius(r_u, STRONG_INV, SINGLE_ITERATION)
        steps = newton_iterates(r_u, STRONG_INV.k1, STRONG_INV.k2)
        next(steps)
        assert it == 1 and r == next(steps)

    def test_divergence_error(self):
        cfg = NewtonConfig(max_iterations=2)
        with pytest.raises(NewtonDivergenceError):
            newton_invert_radius(4000.0, STRONG_INV, cfg)

    def test_degenerate_derivative(self):
        # f'(r) = 1 + 3 k1 r^2 vanishes at r^2 = -1 / (3 k1)
        p = RadialPolyParams(-1 / 3, 0.0, ORIGIN)
        with pytest.raises(DegenerateDerivativeError):
            newton_invert_radius(1.0, p)

    def test_requires_inverse(self):
        with pytest.raises(DirectionMismatchError):
            newton_invert_radius(1.0, RadialPolyParams(0, 0, ORIGIN, Direction.FORWARD))

    def test_negative_radius(self):
        with pytest.raises(ValueError):
            newton_invert_radius(-1.0, STRONG_INV)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0, HD_CORNER), st.floats(-13, -11))
    def test_round_trip_property(self, r_d, log_k1):
        k1 = 10 ** log_k1
        p = RadialPolyParams(k1, k1 / 5, ORIGIN)
        r_u = r_d * (1 + k1 * r_d ** 2 + k1 / 5 * r_d ** 4)
        r, _ = newton_invert_radius(r_u, p)
        assert f_abs(r, r_u, p) < 1e-8
        assert abs(r - r_d) < 1e-6

    @settings(max_examples=100, deadline=None)
    @given(st.floats(1, HD_CORNER), st.floats(-13, -11))
    def test_single_never_beats_converged(self, r_d, log_k1):
        k1 = 10 ** log_k1
        p = RadialPolyParams(k1, k1 / 5, ORIGIN)
        r_u = r_d * (1 + k1 * r_d ** 2 + k1 / 5 * r_d ** 4)
        single, _ = newton_invert_radius(r_u, p, SINGLE_ITERATION)
        conv, _ = newton_invert_radius(r_u, p)
        # converged mode may stop before any update once |f| < tol
        assert f_abs(single, r_u, p) >= f_abs(conv, r_u, p) or f_abs(conv, r_u, p) < 1e-8

    @pytest.mark.parametrize("r_d", [200.0, 700.0, HD_CORNER])
    def test_quadratic_convergence(self, r_d):
        p = STRONG_INV
        r_u = r_d * (1 + p.k1 * r_d ** 2 + p.k2 * r_d ** 4)
        errs = []
        for r in newton_iterates(r_u, p.k1, p.k2):
            errs.append(abs(r - r_d))
            if errs[-1] < 1e-9 or len(errs) > 30:
                break
        ratios = [e1 / e0 ** 2 for e0, e1 in zip(errs, errs[1:]) if 1e-6 < e0 < 1.0]
        assert ratios, errs
        # empirical constant is f''/(2 f') at the root
        c = (6 * p.k1 * r_d + 20 * p.k2 * r_d ** 3) / (2 * (1 + 3 * p.k1 * r_d ** 2 + 5 * p.k2 * r_d ** 4))
        assert max(ratios) <= 2 * c

    def test_array_version_agrees(self):
        r_d = np.linspace(0, HD_CORNER, 101)
        r_u = r_d * STRONG_INV.scale(r_d)
        out, iters, ok = newton_invert_radii(r_u, STRONG_INV)
        assert ok.all()
        for ru, r, it in zip(r_u, out, iters):
            assert (r, it) == newton_invert_radius(ru, STRONG_INV)

    def test_array_reports_divergence(self):
        _, _, ok = newton_invert_radii(np.array([10.0, 4000.0]), STRONG_INV, NewtonConfig(2))
        assert ok.tolist() == [True, False]


class TestNewtonPoint:
    def test_center(self):
        assert newton_map_point(NormalizedPoint(0, 0), STRONG_INV) == NormalizedPoint(0, 0)

    def test_axis_point(self):
        q = newton_map_point(NormalizedPoint(562.50125, 0), STRONG_INV)
        assert q.x == pytest.approx(500, abs=1e-6) and q.y == pytest.approx(0, abs=1e-6)

    def test_diagonal_point(self):
        pre = NormalizedPoint(353.55, 353.55)
        img = map_point(pre, STRONG_INV)
        assert img.x == pytest.approx(397.75, abs=0.01)
        back = newton_map_point(img, STRONG_INV)
        assert back.x == pytest.approx(pre.x, abs=1e-5) and back.y == pytest.approx(pre.y, abs=1e-5)

    @given(st.floats(-1500, 1500), st.floats(-1500, 1500))
    def test_direction_preserved(self, x, y):
        q = newton_map_point(NormalizedPoint(x, y), STRONG_INV)
        if x * x + y * y < 1e-12:
            assert math.hypot(q.x, q.y) <= math.hypot(x, y)
        else:
            s = (q.x * x + q.y * y) / (x * x + y * y)
            assert s >= 0
            assert q.x == pytest.approx(s * x, abs=1e-9) and q.y == pytest.approx(s * y, abs=1e-9)

    def test_vectorised(self):
        pts = np.array([[0.0, 0.0], [562.50125, 0.0], [-300.0, 40.0]])
        out, _, ok = newton_map_points(pts, STRONG_INV)
        assert ok.all()
        for p, q in zip(pts, out):
            r = newton_map_point(NormalizedPoint(*p), STRONG_INV)
            assert (r.x, r.y) == pytest.approx(tuple(q), abs=1e-12)


class TestRational:
    def test_zero_alpha(self):
        params = RationalInverseParams((0.0,) * 6, ORIGIN)
        assert rational_map_point(NormalizedPoint(12.5, -3), params) == NormalizedPoint(12.5, -3)

    def test_origin_fixed(self):
        params = RationalInverseParams((1e-7, 1e-13, 0, 0, 1e-7, 1e-13), ORIGIN)
        assert rational_map_point(NormalizedPoint(0, 0), params) == NormalizedPoint(0, 0)

    def test_denominator_sign(self):
        params = RationalInverseParams((0, 0, 0, 0, -1e-6, 0), ORIGIN)
        with pytest.raises(DenominatorSignError):
            rational_map_point(NormalizedPoint(1000, 0), params)
        with pytest.raises(DenominatorSignError):
            params.check_denominator(1000)
        params.check_denominator(100)

    def test_identity_fit(self):
        fit = fit_rational_inverse(inverse((0.0, 0.0)), *HD, stride=4)
        assert all(abs(a) < 1e-9 for a in fit.alpha)
        assert fit.rms_residual < 1e-9

    def test_weak_fit_and_holdout(self):
        inv = inverse(WEAK)
        fit = fit_rational_inverse(inv, *HD, stride=4)
        assert fit.rms_residual < 0.01
        p_u, p_d = fit_samples(inv, *HD, stride=7, offset=1)
        held = np.sqrt(np.mean(np.sum((rational_map_points(p_u, fit) - p_d) ** 2, axis=1)))
        assert held < 0.01

    def test_strong_fit_is_worse(self):
        weak = fit_rational_inverse(inverse(WEAK), *HD, stride=4)
        strong = fit_rational_inverse(inverse(STRONG), *HD, stride=4)
        assert math.isfinite(strong.rms_residual)
        assert strong.rms_residual > weak.rms_residual

    def test_training_points_within_three_residuals(self):
        inv = inverse(WEAK)
        fit = fit_rational_inverse(inv, *HD, stride=8)
        p_u, p_d = fit_samples(inv, *HD, stride=8)
        err = np.hypot(*(rational_map_points(p_u, fit) - p_d).T)
        assert err.max() < 3 * fit.rms_residual

    @pytest.mark.parametrize("k", [WEAK, (1e-12, 2e-13), STRONG])
    def test_refinement_monotone(self, k):
        fit = fit_rational_inverse(inverse(k), *HD, stride=8)
        h = fit.history
        assert all(b < a for a, b in zip(h, h[1:]))
        assert fit.rms_residual == pytest.approx(math.sqrt(h[-1] / len(fit_samples(inverse(k), *HD, 8)[0])))

    def test_deterministic(self):
        a = fit_rational_inverse(inverse(STRONG), *HD, stride=8)
        b = fit_rational_inverse(inverse(STRONG), *HD, stride=8)
        assert a.alpha == b.alpha

    def test_fit_samples_direction(self):
        inv = inverse(WEAK)
        p_u, p_d = fit_samples(inv, 5, 4, stride=2)
        assert len(p_d) == 3 * 2
        assert np.allclose(p_u, map_points(p_d, inv))

    def test_bad_stride(self):
        with pytest.raises(ValueError):
            fit_rational_inverse(inverse(WEAK), 10, 10, stride=0)

    def test_dict_round_trip(self):
        fit = fit_rational_inverse(inverse(WEAK), 64, 48, stride=2)
        again = RationalInverseParams.from_dict(fit.as_dict())
        assert again.alpha == fit.alpha and again.center == fit.center

    def test_newton_mode_enum(self):
        assert SINGLE_ITERATION.mode is NewtonMode.SINGLE
        with pytest.raises(ValueError):
            NewtonConfig(max_iterations=0)
