import math

import numpy as np
import pytest

from config import LAB_CONFIG
from handlers.commands_blowup import run_blowup
from handlers.commands_utils import UsageError
from services.blowup import (
    FrameIntervalError,
    LimitReport,
    ScheduleError,
    centering_offsets,
    central_sequence_typeI,
    central_sequence_typeII,
    check_rescaled_bound,
    estimate_singular_point,
    frechet_mean_vertex,
    is_cauchy,
    pick_offsets,
    rescale,
    uniform_convergence,
)
from services.immersion import unit_circle
from services.mcflow import FlowSettings, FlowTrajectory, analyze, run
from services.scenarios import dumbbell

S_GRID = [-1.0, -0.5, 0.0]


def test_type_one_schedule(circle_traj):
    cs = central_sequence_typeI(circle_traj, j_count=5)
    assert [e.j for e in cs.entries] == [1, 2, 3, 4, 5]
    for entry in cs.entries:
        target = circle_traj.t_hat * (1.0 - 2.0 ** -entry.j)
        assert entry.t <= target
        upto = circle_traj.times <= target
        assert entry.q == pytest.approx(np.max(circle_traj.sups[upto]))
        assert entry.horizon is None
        assert entry.interval() == (-(entry.q**2) * entry.t, 0.0)


def test_type_one_schedule_outside_trajectory(circle_traj):
    with pytest.raises(ScheduleError):
        central_sequence_typeI(circle_traj, schedule=[circle_traj.times[-1] + 0.01])


def test_type_two_sequence_is_a_brute_force_maximum(circle_traj):
    t_hat = circle_traj.t_hat
    schedule = [0.3, 0.4, 0.45]
    cs = central_sequence_typeII(circle_traj, ttilde_schedule=schedule, t_hat=t_hat)
    for entry, ttilde in zip(cs.entries, schedule):
        assert entry.ttilde == ttilde
        product = (ttilde - entry.t) * entry.q**2
        for snap in circle_traj.snapshots:
            if snap.t < ttilde:
                assert product >= (ttilde - snap.t) * snap.sup_ii**2 - 1e-12
        lo, hi = entry.interval()
        assert hi == pytest.approx(entry.horizon)
    assert cs.warnings == []


def test_rescaled_frames_are_unit_circles(circle_traj):
    cs = central_sequence_typeI(circle_traj, j_count=4)
    frames = rescale(circle_traj, cs, 4, S_GRID)
    assert [f.s for f in frames] == S_GRID
    at_zero = frames[-1]
    assert at_zero.central_ii == pytest.approx(1.0, rel=1e-9)
    assert np.linalg.norm(at_zero.immersion.vertices[cs.limit_vertex]) == pytest.approx(0.0, abs=1e-12)
    assert at_zero.q == cs.entry(4).q
    # радиус кадра в момент s равен sqrt(1 - 2 s)
    for frame in frames:
        assert frame.sup_ii ** -2 == pytest.approx(1.0 - 2.0 * frame.s, rel=1e-3)


def test_frames_outside_the_interval(circle_traj):
    cs = central_sequence_typeI(circle_traj, j_count=2)
    with pytest.raises(FrameIntervalError):
        rescale(circle_traj, cs, 1, [-10.0])
    with pytest.raises(FrameIntervalError):
        rescale(circle_traj, cs, 1, [0.5])
    with pytest.raises(ValueError):
        rescale(circle_traj, cs, 1, [0.0], centering="sideways")


def test_singular_point_of_a_centered_circle(circle_traj):
    cs = central_sequence_typeI(circle_traj, j_count=4)
    assert np.allclose(estimate_singular_point(circle_traj, cs), 0.0, atol=1e-3)


def test_circle_blowup_limit(circle_traj):
    result = run_blowup(circle_traj, 4, LAB_CONFIG["BLOWUP"]["S_GRID"], "smooth", LAB_CONFIG["BLOWUP"])
    assert result["mode"] == "TypeI"
    assert result["limit"].cauchy
    assert result["limit"].central_ok
    verdict = result["verdict"]
    assert verdict.passed
    assert verdict.shrinker.shrinker_class == "Sphere"
    assert verdict.shrinker.alpha == pytest.approx(-1.0, rel=1e-3)
    assert verdict.extinction.s_star == pytest.approx(0.5, rel=1e-2)
    assert result["offsets"].bounded


def test_tangent_flow_centering(circle_traj):
    result = run_blowup(circle_traj, 4, [-1.0, 0.0], "tangent", LAB_CONFIG["BLOWUP"])
    frame = result["frames"][4][-1]
    assert np.allclose(frame.center, result["x0"])
    assert result["verdict"].shrinker.shrinker_class == "Sphere"


def test_blowup_needs_a_classified_store():
    traj = FlowTrajectory()
    traj.append(0.0, unit_circle(32))
    with pytest.raises(UsageError):
        run_blowup(traj, 4, S_GRID, "smooth", LAB_CONFIG["BLOWUP"])


def test_cauchy_criterion():
    assert is_cauchy([0.1, 0.05, 0.02], slack=0.25, floor=1e-6)
    assert not is_cauchy([0.1, 0.2], slack=0.25, floor=1e-6)
    assert not is_cauchy([], slack=0.25, floor=1e-6)
    assert not is_cauchy([0.1, float("inf")], slack=0.25, floor=1e-6)


def test_frechet_mean_vertex():
    circle = unit_circle(64)
    assert frechet_mean_vertex(circle, [3, 4, 5]) == 4
    assert frechet_mean_vertex(circle, [63, 0, 1]) == 0


def test_smooth_frames_center_on_the_limit_vertex():
    # p̄ отличен от p_j: кадр центрируется в F(p̄, t_j)
    traj = FlowTrajectory()
    for k in range(6):
        traj.append(0.01 * k, unit_circle(32, radius=1.0 - 0.01 * k))
    cs = central_sequence_typeI(traj, schedule=[0.02, 0.04, 0.05], t_hat=0.5)
    cs.limit_vertex = 3
    frame = rescale(traj, cs, 3, [0.0])[0]
    assert np.linalg.norm(frame.immersion.vertices[3]) == pytest.approx(0.0, abs=1e-12)
    picks = pick_offsets(traj, cs)
    entry = cs.entry(3)
    expected = entry.q * np.linalg.norm(
        traj.snapshots[entry.snapshot].immersion.vertices[entry.vertex]
        - traj.snapshots[entry.snapshot].immersion.vertices[3]
    )
    assert picks[-1] == pytest.approx(expected)


def test_rescaled_bound_at_the_horizon(circle_traj):
    cs = central_sequence_typeII(circle_traj, ttilde_schedule=[0.3, 0.4, 0.45], t_hat=circle_traj.t_hat)
    entry = cs.entry(1)
    assert entry.t == 0.0
    horizon = entry.horizon
    frames = rescale(circle_traj, cs, 1, [0.5 * horizon, horizon])
    report = check_rescaled_bound(frames, cs, 1)
    assert report.passed
    assert report.rows[-1]["bound"] == math.inf
    assert report.rows[0]["bound"] == pytest.approx(2.0)
    assert math.isfinite(report.max_ratio)
    assert report.max_ratio < 1.0


def test_uniform_convergence_of_circle_frames(circle_traj):
    cs = central_sequence_typeI(circle_traj, j_count=4)
    report = uniform_convergence(circle_traj, cs, S_GRID)
    assert len(report.sup_distances) == 3
    assert "0" in report.by_s
    assert all(math.isfinite(d) for d in report.sup_distances)
    assert max(report.sup_distances) <= 1e-2


def test_centering_offsets_of_a_circle(circle_traj):
    cs = central_sequence_typeI(circle_traj, j_count=4)
    report = centering_offsets(circle_traj, cs, np.zeros(2))
    # |Q_j (0 - F(p̄, t_j))| = Q_j R_j = 1
    assert report.norms == pytest.approx([1.0] * 4, rel=1e-6)
    assert report.bounded
    assert report.spread <= 1e-6
    assert report.pick_norms == pytest.approx([0.0] * 4, abs=1e-12)
    assert report.to_dict()["pick_offsets"] == report.pick_norms


def test_limit_verdict_degrades_on_chart_failures():
    broken = LimitReport(cauchy=False, distances=[0.1, math.inf], central_ii=1.0, central_ok=True)
    assert broken.verdict == "chart_failure"
    assert broken.to_dict()["verdict"] == "chart_failure"
    diverging = LimitReport(cauchy=False, distances=[0.1, 0.5], central_ii=1.0, central_ok=True)
    assert diverging.verdict == "divergent"


def test_blowup_grid_without_zero_is_rejected(circle_traj):
    with pytest.raises(UsageError):
        run_blowup(circle_traj, 4, [-1.0, -0.5], "smooth", LAB_CONFIG["BLOWUP"])


def test_dumbbell_neckpinch_blows_up_to_a_cylinder():
    traj = run(dumbbell(201), FlowSettings(resample_every=5, resample_mode="curvature"))
    assert analyze(traj).kind == "TypeI"
    neck = traj.snapshots[-1].immersion
    assert not neck.uniform
    assert abs(traj.snapshots[-1].argmax - 100) <= 1

    result = run_blowup(traj, 10, LAB_CONFIG["BLOWUP"]["S_GRID"], "smooth", LAB_CONFIG["BLOWUP"])
    verdict = result["verdict"]
    assert verdict.shrinker.shrinker_class == "Cylinder"
    assert verdict.radius_error <= 0.05
    assert verdict.extinction.extinct
    assert verdict.passed
    assert result["limit"].central_ok
