import math

import numpy as np
import pytest

from services.immersion import AxisymProfile, unit_circle
from services.mcflow import (
    ClassifySettings,
    EstimationError,
    FlowSettings,
    FlowTrajectory,
    analyze,
    classify_singularity,
    estimate_singular_time,
    redistribute,
    run,
    s_of_t,
    stable_argmax,
    step,
)
from services.scenarios import cylinder_profile, dumbbell, limacon


def test_polygon_shrinks_self_similarly():
    circle = unit_circle(64)
    moved = step(circle, 1e-4)
    radii = np.linalg.norm(moved.vertices, axis=1)
    assert np.ptp(radii) <= 1e-12
    assert radii[0] < 1.0


def test_circle_flow_reaches_the_cap(circle_traj):
    assert circle_traj.terminal_event == "curvature_cap"
    assert circle_traj.snapshots[-1].sup_ii >= 50.0
    assert np.all(np.diff(circle_traj.times) > 0)
    # R^2 = 1 - 2t
    for snap in circle_traj.snapshots[::20]:
        assert snap.sup_ii ** -2 == pytest.approx(1.0 - 2.0 * snap.t, abs=1e-4)


def test_circle_singular_time_and_type(circle_traj):
    assert circle_traj.t_hat == pytest.approx(0.5, abs=1e-3)
    singularity = circle_traj.singularity
    assert singularity.kind == "TypeI"
    assert singularity.type_one_constant == pytest.approx(0.5, rel=2e-2)
    assert singularity.floor_ok
    s = s_of_t(circle_traj)
    assert np.all(np.isfinite(s))
    assert np.nanmedian(s[: len(s) // 2]) == pytest.approx(0.5, rel=1e-2)


def test_sphere_profile_flow(sphere_traj):
    # R^2 = 1 - 2 m t, m = 2
    assert sphere_traj.t_hat == pytest.approx(0.25, abs=1e-3)
    assert sphere_traj.singularity.kind == "TypeI"
    assert sphere_traj.singularity.type_one_constant == pytest.approx(0.5, rel=5e-2)


def test_cylinder_stays_round():
    cylinder = cylinder_profile(32, radius=1.0)
    traj = run(cylinder, FlowSettings(curvature_cap=4.0))
    last = traj.snapshots[-1].immersion
    assert np.ptp(last.values) <= 1e-10
    # R^2 = 1 - 2 (m - 1) t
    assert last.values[0] ** 2 == pytest.approx(1.0 - 2.0 * traj.times[-1], abs=1e-4)


def test_time_cap_without_singularity():
    traj = run(unit_circle(32), FlowSettings(t_max=0.1))
    assert traj.terminal_event == "t_max"
    assert traj.times[-1] == pytest.approx(0.1)
    assert analyze(traj).kind == "NoSingularityDetected"
    assert traj.t_hat is None
    assert np.all(np.isnan(s_of_t(traj)))


def test_step_limit():
    traj = run(unit_circle(32), FlowSettings(max_steps=5))
    assert traj.terminal_event == "max_steps"
    assert traj.accepted_steps == 5


def test_estimate_needs_enough_snapshots():
    traj = FlowTrajectory()
    for k in range(5):
        traj.append(0.1 * k, unit_circle(32, radius=1.0 - 0.1 * k))
    with pytest.raises(EstimationError):
        estimate_singular_time(traj, ClassifySettings(min_snapshots=10))


def test_snapshot_times_must_increase():
    traj = FlowTrajectory()
    traj.append(0.0, unit_circle(32))
    with pytest.raises(ValueError):
        traj.append(0.0, unit_circle(32))


def test_argmax_ties_prefer_the_previous_vertex():
    circle = unit_circle(32)
    assert stable_argmax(circle) == 0
    assert stable_argmax(circle, previous=17) == 17


def test_interpolation_between_snapshots(circle_traj):
    a, b = circle_traj.snapshots[3], circle_traj.snapshots[4]
    mid = circle_traj.interpolate(0.5 * (a.t + b.t))
    assert np.allclose(mid.vertices, 0.5 * (a.immersion.vertices + b.immersion.vertices))
    with pytest.raises(ValueError):
        circle_traj.interpolate(circle_traj.times[-1] + 1.0)


def test_flow_rejects_nonpositive_dt():
    with pytest.raises(ValueError):
        step(unit_circle(32), 0.0)
    assert math.isfinite(unit_circle(32).sup_ii)


def _circles_with_rate(s_of_gap, t_hat=1.0):
    """Окружности с sup|II|^2 (T - t) = s(T - t) на геометрической сетке зазоров."""
    traj = FlowTrajectory()
    for gap in np.logspace(0.0, -6.0, 61):
        sup = math.sqrt(s_of_gap(gap) / gap)
        traj.append(t_hat - gap, unit_circle(32, radius=1.0 / sup))
    return traj


def test_growing_rate_is_type_two():
    traj = _circles_with_rate(lambda gap: gap**-0.5)
    result = classify_singularity(traj, 1.0, 0.0)
    assert result.kind == "TypeII"
    assert result.s_max == pytest.approx(1000.0, rel=1e-6)
    assert result.trend > 0


def test_slow_growth_below_threshold_is_indeterminate():
    traj = _circles_with_rate(lambda gap: 0.3 * (gap / 10**-4.2) ** -0.6)
    result = classify_singularity(traj, 1.0, 0.0)
    assert result.kind == "Indeterminate"
    assert result.s_max < 10.0
    assert result.s_max / result.s_min > 4.0


def test_type_one_band_still_wins_below_the_growth_threshold():
    traj = _circles_with_rate(lambda gap: 0.5)
    result = classify_singularity(traj, 1.0, 0.0)
    assert result.kind == "TypeI"
    assert result.type_one_constant == pytest.approx(0.5, rel=1e-9)


def test_curvature_resampling_concentrates_on_the_loop():
    curve = limacon(256)
    settings = FlowSettings(resample_mode="curvature")
    dense = redistribute(curve, settings)
    assert dense.size == 256
    assert np.allclose(dense.vertices[0], curve.vertices[0])
    # петля r < 0 при cos(theta) < -0.8
    inside = np.linalg.norm(dense.vertices - [0.1, 0.0], axis=1) < 0.15
    assert np.count_nonzero(inside) > np.count_nonzero(np.linalg.norm(curve.vertices - [0.1, 0.0], axis=1) < 0.15)
    assert int(np.argmax(dense.curvature)) == 128


def test_arclength_mode_leaves_profiles_alone():
    profile = dumbbell(51)
    assert redistribute(profile, FlowSettings(resample_mode="arclength")) is profile
    regridded = redistribute(profile, FlowSettings(resample_mode="curvature"))
    assert isinstance(regridded, AxisymProfile)
    assert not regridded.uniform
    assert regridded.coords[0] == profile.coords[0] and regridded.coords[-1] == profile.coords[-1]
    assert regridded.coords[25] == pytest.approx(0.0, abs=1e-9)
    # шейка получает узлы гуще, чем луковицы
    steps = np.diff(regridded.coords)
    assert steps[24] < steps[0]


def test_interpolation_across_a_regridded_profile():
    a = dumbbell(51)
    b = redistribute(a, FlowSettings(resample_mode="curvature"))
    traj = FlowTrajectory()
    traj.append(0.0, a)
    traj.append(1.0, b.with_values(b.values * 0.5))
    mid = traj.interpolate(0.5)
    assert np.array_equal(mid.coords, a.coords)
    expected = 0.5 * a.values + 0.5 * np.interp(a.coords, b.coords, 0.5 * b.values)
    assert np.allclose(mid.values, expected)


def test_limacon_loop_collapse_is_type_two():
    settings = FlowSettings(resample_every=5, resample_mode="curvature", curvature_cap=5000.0)
    traj = run(limacon(256), settings)
    assert traj.terminal_event == "curvature_cap"
    singularity = analyze(traj)
    assert singularity.kind == "TypeII"
    assert singularity.s_max > 10.0
    assert abs(traj.snapshots[-1].argmax - 128) <= 2
