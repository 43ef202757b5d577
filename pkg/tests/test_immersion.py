import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from services.immersion import (
    AxisymProfile,
    CurveError,
    DiscreteCurve,
    SingularProfileError,
    induced_distance,
    regrid_profile,
    resample_arclength,
    resample_curvature,
    sphere_area,
    unit_circle,
)
from services.scenarios import build_initial, cylinder_profile, dumbbell, ellipse, limacon, sphere_profile


def test_regular_polygon_has_exact_curvature():
    circle = unit_circle(64, radius=2.0)
    assert np.allclose(circle.curvature, 0.5, rtol=1e-12)
    # левая нормаль смотрит внутрь для обхода против часовой стрелки
    assert np.allclose(circle.normals, -circle.vertices / 2.0, atol=1e-12)
    assert circle.sup_ii == pytest.approx(0.5)
    assert circle.length == pytest.approx(128 * 2.0 * math.sin(math.pi / 64))
    assert circle.turning_number == 1


def test_limacon_turns_twice():
    assert limacon(256).turning_number == 2


def test_open_polyline_has_flat_ends():
    line = DiscreteCurve(np.stack([np.linspace(-1, 1, 11), np.zeros(11)], axis=1), closed=False)
    assert np.all(line.curvature == 0.0)
    assert line.segment_weights.sum() == pytest.approx(line.length)
    with pytest.raises(CurveError):
        line.turning_number


def test_resampling_is_idempotent():
    curve = resample_arclength(ellipse(80), 80)
    chords = curve.edge_lengths
    assert np.ptp(chords) <= 1e-9 * chords.mean()
    again = resample_arclength(curve, 80)
    assert np.allclose(again.vertices, curve.vertices, atol=1e-9)


def test_induced_distance_takes_the_short_arc():
    circle = unit_circle(100)
    assert induced_distance(circle, 0, 99) == pytest.approx(circle.edge_lengths[0])
    assert induced_distance(circle, 0, 50) == pytest.approx(circle.length / 2.0)


def test_curve_validation():
    with pytest.raises(CurveError):
        DiscreteCurve(np.zeros((8, 2)))
    points = unit_circle(32).vertices.copy()
    points[5] = points[4]
    with pytest.raises(CurveError):
        DiscreteCurve(points)


def test_sphere_area():
    assert sphere_area(1) == pytest.approx(2.0)
    assert sphere_area(2) == pytest.approx(2.0 * math.pi)
    assert sphere_area(3) == pytest.approx(4.0 * math.pi)


def test_round_sphere_profile():
    sphere = sphere_profile(129, radius=1.0, m=2)
    kp, ka = sphere.principal_curvatures
    assert np.allclose(kp, 1.0) and np.allclose(ka, 1.0)
    assert sphere.sup_ii == pytest.approx(math.sqrt(2.0))
    assert np.allclose(sphere.normal_curvature, -2.0)
    assert np.allclose(np.linalg.norm(sphere.positions, axis=1), 1.0)
    assert sphere.measure == pytest.approx(4.0 * math.pi, rel=1e-3)


def test_cylinder_profile():
    cylinder = cylinder_profile(64, radius=1.0, m=2, half_length=2.0)
    assert np.allclose(cylinder.normal_curvature, -1.0)
    assert np.allclose(cylinder.outward_normals, [0.0, 1.0])
    assert cylinder.measure == pytest.approx(2.0 * math.pi * 4.0)


def test_profile_rescaling_moves_the_axis_origin():
    cylinder = cylinder_profile(32, radius=0.5)
    scaled = cylinder.rescaled(4.0, axial_center=1.0)
    assert np.allclose(scaled.values, 2.0)
    assert scaled.axial_shift == pytest.approx(-4.0)
    assert np.allclose(scaled.positions[:, 0], 4.0 * (cylinder.positions[:, 0] - 1.0))


def test_profile_touching_the_axis_is_rejected():
    x = np.linspace(-1, 1, 11)
    with pytest.raises(SingularProfileError):
        AxisymProfile(x, np.abs(x))
    with pytest.raises(ValueError):
        AxisymProfile(np.array([0.0, 0.1, 0.3, 0.4, 0.5]), np.ones(5), boundary="periodic")
    with pytest.raises(ValueError):
        AxisymProfile(np.array([0.0, 0.1, 0.1, 0.4, 0.5]), np.ones(5))


def test_build_initial_dispatch():
    assert isinstance(build_initial("circle", {}, 32), DiscreteCurve)
    dumbbell = build_initial("dumbbell", {}, 101)
    assert isinstance(dumbbell, AxisymProfile)
    assert dumbbell.values[50] == pytest.approx(0.3)
    with pytest.raises(ValueError):
        build_initial("torus", {}, 32)


def test_nonuniform_graph_stencils_are_exact_on_quadratics():
    x = np.array([-1.0, -0.7, -0.55, -0.2, 0.0, 0.15, 0.5, 0.6, 1.0])
    profile = AxisymProfile(x, 2.0 + x**2)
    assert not profile.uniform
    first, second = profile.derivatives
    assert np.allclose(first[1:-1], 2.0 * x[1:-1], atol=1e-12)
    assert np.allclose(second[1:-1], 2.0, atol=1e-10)
    # отражённые края: u' = 0
    assert first[0] == 0.0 and first[-1] == 0.0
    assert profile.segment_weights.sum() == pytest.approx(trapezoid(profile.speed, x))
    with pytest.raises(ValueError):
        profile.spacing


def test_uniform_profile_reports_equal_steps():
    cylinder = cylinder_profile(32)
    hm, hp = cylinder.steps
    assert np.allclose(hm, cylinder.spacing) and np.allclose(hp, cylinder.spacing)


def test_curvature_resampling_of_a_circle_is_uniform():
    circle = unit_circle(64)
    again = resample_curvature(circle, 64)
    assert np.allclose(np.linalg.norm(again.vertices, axis=1), 1.0, atol=1e-6)
    chords = again.edge_lengths
    assert np.ptp(chords) <= 1e-2 * chords.mean()
    assert np.allclose(again.vertices[0], circle.vertices[0])
    with pytest.raises(CurveError):
        resample_curvature(DiscreteCurve(circle.vertices[:20], closed=False), 20)


def test_profile_regrid_keeps_the_shape():
    neck = dumbbell(101)
    fine = regrid_profile(neck)
    assert fine.size == neck.size
    assert np.allclose(fine.values, np.interp(fine.coords, neck.coords, neck.values), atol=5e-3)
    assert fine.values[50] == pytest.approx(0.3, abs=1e-6)
    with pytest.raises(ValueError):
        regrid_profile(cylinder_profile(32))
