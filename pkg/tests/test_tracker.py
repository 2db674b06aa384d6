import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import CubicSpline

from flatflow.errors import IntersectionDetected, StepTooLarge
from flatflow.flow import ForcingSpec
from flatflow.tracker import (CurveSystem, circle_polygon, cyclic_tridiagonal_solve, ellipse_polygon, evolve,
                              log_tail_fit, mean_curvature_forcing, pair_initial, resample_uniform, signed_area,
                              theorem3_run, vertex_curvature)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 40), st.integers(0, 2 ** 31 - 1))
def test_cyclic_solve_matches_dense(n, seed):
    rng = np.random.default_rng(seed)
    a, c, d = rng.normal(size=(3, n))
    b = 4.0 + np.abs(a) + np.abs(c)
    M = np.diag(b) + np.diag(a[1:], -1) + np.diag(c[:-1], 1)
    M[0, -1] += a[0]
    M[-1, 0] += c[-1]
    assert np.allclose(cyclic_tridiagonal_solve(a, b, c, d), np.linalg.solve(M, d), atol=1e-12)


def test_resample_matches_periodic_spline():
    X = ellipse_polygon((0.0, 0.0), 1.5, 0.7, 40)
    Y = resample_uniform(X, 64)
    P = np.vstack([X, X[:1]])
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(P, axis=0).T))])
    sp = CubicSpline(s, P, bc_type="periodic")
    assert np.allclose(Y, sp(np.linspace(0, s[-1], 64, endpoint=False)), atol=1e-12)


def test_curvature_of_regular_polygon():
    X = circle_polygon((0.0, 0.0), 2.0, 64)
    k = vertex_curvature(X)
    assert np.allclose(k, k[0]) and k[0] == pytest.approx(0.5, rel=1e-3)


def test_length_matched_circle_is_stationary():
    X = circle_polygon((0.0, 0.0), 1.0, 64, match_length=True)
    sys = CurveSystem((X,))
    dt = 0.1 * sys.min_spacing ** 2
    for _ in range(200):
        sys = evolve(sys, dt, 1.0)
    assert np.max(np.abs(sys.curves[0] - X)) < 1e-10


def test_shrinking_circle():
    sys = CurveSystem((circle_polygon((0.0, 0.0), 1.0, 128),), spacing=2 * np.pi / 128)
    t = 0.0
    while t < 0.3 - 1e-12:
        dt = min(0.15 * sys.min_spacing ** 2, 0.3 - t)
        sys = evolve(sys, dt, 0.0)
        t += dt
    r = math.sqrt(sys.areas[0] / math.pi)
    assert r == pytest.approx(math.sqrt(1 - 2 * 0.3), abs=2e-3)


def test_volume_preserving_ellipse_rounds():
    X = ellipse_polygon((0.0, 0.0), 1.0 / 1.2, 1.0, 96)
    sys = CurveSystem((X,), mode="volume_preserving")
    A0 = sys.areas[0]
    dt = 0.15 * sys.min_spacing ** 2
    for _ in range(int(3.0 / dt)):
        sys = evolve(sys, dt)
    assert sys.areas[0] == pytest.approx(A0, rel=1e-4)
    r = np.hypot(*sys.curves[0].T)
    assert np.ptp(r) < 1e-3
    assert mean_curvature_forcing(sys) == pytest.approx(2 * np.pi / sys.lengths[0])


def test_step_restriction_and_intersection():
    sys = CurveSystem((circle_polygon((0.0, 0.0), 1.0, 64),))
    with pytest.raises(StepTooLarge):
        evolve(sys, sys.min_spacing ** 2, 0.0)
    two = CurveSystem((circle_polygon((-1.02, 0.0), 1.0, 64), circle_polygon((1.02, 0.0), 1.0, 64)))
    dt = 0.15 * two.min_spacing ** 2
    with pytest.raises(IntersectionDetected) as info:
        for _ in range(10000):
            two = evolve(two, dt, ForcingSpec.constant(5.0).c0)
    assert info.value.state is not None


def test_curve_system_validation():
    X = circle_polygon((0.0, 0.0), 1.0, 32)
    with pytest.raises(ValueError):
        CurveSystem((X[::-1],))
    with pytest.raises(ValueError):
        CurveSystem((X,), mode="other")


def test_pair_initial_is_mirror_symmetric():
    left, right = pair_initial(1.2, 64)
    assert signed_area(left) == pytest.approx(signed_area(right))
    assert signed_area(right) == pytest.approx(math.pi / 1.2, rel=2e-3)
    assert np.allclose(np.sort(left[:, 0]), np.sort(-right[:, 0]))


def test_log_tail_fit_recovers_rate():
    t = np.linspace(0, 10, 501)
    d = 0.3 * np.exp(-1.7 * t) + 1e-12
    fit = log_tail_fit(t, d)
    assert fit.slope == pytest.approx(-1.7, rel=1e-3)
    assert fit.r2 > 0.999


def test_short_theorem3_run():
    res = theorem3_run(1.2, 1.0, n=64)
    assert not res.intersected
    assert res.min_gap > 0
    assert res.area_drift < 1e-3
    assert res.final_distance < res.metrics["hausdorff_to_limit"][0]
