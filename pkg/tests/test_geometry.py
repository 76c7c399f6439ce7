import math

import numpy as np
import pytest

from landau_factor.geometry import (
    GreatCircleArc,
    PathError,
    PolarTriangle,
    PrecessingCone,
    SampledWaypoints,
    displacement_path,
    shoelace_area,
    solid_angle,
    transport_frame,
    wrap_angle,
)


@pytest.mark.parametrize("theta", [math.pi / 6, math.pi / 3, math.pi / 2])
def test_cone_solid_angle(theta):
    # closed form for a cap of half-angle theta
    path = PrecessingCone(theta, 0.1)
    assert solid_angle(path) == pytest.approx(wrap_angle(2 * math.pi * (1 - math.cos(theta)), 4 * math.pi),
                                              abs=1e-10)


def test_triangle_solid_angle():
    path = PolarTriangle(math.pi / 3, math.pi, 1.0)
    assert solid_angle(path) == pytest.approx(math.pi / 2, abs=1e-10)
    assert path.is_closed()


def test_cone_frame_orthonormal_and_transported(fast_cone_frame):
    fr = fast_cone_frame
    assert fr.drift <= 1e-10
    assert fr.transport_residual() <= 1e-10
    E = fr.at(17.3)
    n, _ = fr.path.evaluate(17.3)
    np.testing.assert_allclose(E @ E.T, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(E[2], n, atol=1e-10)


def test_cone_holonomy_angle(fast_cone_frame):
    theta = math.pi / 3
    err = math.remainder(fast_cone_frame.holonomy_angle() - 2 * math.pi * (1 - math.cos(theta)), 2 * math.pi)
    assert abs(err) <= 1e-6


def test_great_circle_has_no_holonomy():
    fr = transport_frame(GreatCircleArc((0.0, 0.0, 1.0), 2 * math.pi, 0.5))
    assert abs(math.remainder(fr.holonomy_angle(), 2 * math.pi)) <= 1e-9


def test_signals_alpha_modulus(fast_cone_frame):
    # |alpha| = |ndot| = eps sin(theta) on a cone
    s = fast_cone_frame.signals(5.0)
    assert abs(s.alpha) == pytest.approx(0.1 * math.sin(math.pi / 3), rel=1e-12)
    assert s.ndot_sq == pytest.approx(abs(s.alpha) ** 2, rel=1e-12)


def test_cone_displacement_is_circle(cone_frame):
    # The transported alpha rotates uniformly at eps cos(theta), so d traces a
    # circle of radius (L/2) tan(theta); S_d is the circular-segment area.
    theta, eps, L = math.pi / 3, 0.01, 1.0
    dp = displacement_path(cone_frame, L)
    R = 0.5 * L * math.tan(theta)
    for t in (50.0, 200.0, 400.0):
        d1, d2, S = dp.at(t)
        phi = eps * math.cos(theta) * t
        assert math.hypot(d1, d2) == pytest.approx(2 * R * abs(math.sin(phi / 2)), rel=1e-10)
        assert abs(S) == pytest.approx(0.5 * R * R * (phi - math.sin(phi)), rel=1e-9)


def test_displacement_zero_length():
    fr = transport_frame(PrecessingCone(math.pi / 4, 0.2))
    dp = displacement_path(fr, 0.0)
    assert dp.final == (0.0, 0.0, 0.0)


def test_shoelace_unit_square():
    assert shoelace_area([0, 1, 1, 0], [0, 0, 1, 1]) == pytest.approx(1.0)
    assert shoelace_area([0, 0, 1, 1], [0, 1, 1, 0]) == pytest.approx(-1.0)


def test_waypoints_follow_cone():
    cone = PrecessingCone(math.pi / 3, 0.2, duration=10.0)
    ts = np.linspace(0.0, 10.0, 41)
    pts = [cone.evaluate(t)[0] for t in ts]
    wp = SampledWaypoints(tuple(ts), tuple(map(tuple, pts)), 5)
    n, _ = wp.evaluate(3.3)
    np.testing.assert_allclose(n, cone.evaluate(3.3)[0], atol=1e-6)
    assert np.linalg.norm(n) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("bad", [0.0, math.pi, -0.1])
def test_triangle_rejects_bad_theta(bad):
    with pytest.raises(PathError):
        PolarTriangle(bad, 1.0, 1.0)


def test_time_outside_path():
    with pytest.raises(PathError):
        PrecessingCone(1.0, 0.1, duration=5.0).evaluate(6.0)


def test_open_path_has_no_solid_angle():
    with pytest.raises(PathError):
        solid_angle(GreatCircleArc((0.0, 0.0, 1.0), 1.0, 0.5))
