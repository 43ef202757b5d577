import math

import numpy as np
import pytest

from services.immersion import unit_circle
from services.langer import (
    PreconditionError,
    check_r_alpha,
    certify_snapshots,
    cover_levels,
    covering_constant,
    embedding_constant,
    graph_over,
    injectivity_lower_bound,
    langer_chart,
    r_max_lemma,
)
from services.scenarios import cylinder_profile, limacon


def test_r_max_and_covering_constant():
    assert r_max_lemma(1.0, 1.0) == pytest.approx(0.353553, abs=1e-6)
    assert r_max_lemma(1.0, 2.0) == pytest.approx(0.353553 / 2.0, abs=1e-6)
    assert math.isinf(r_max_lemma(1.0, 0.0))
    assert covering_constant(1, 1.0) == 12


def test_circle_charts_are_graphs_below_r_max():
    circle = unit_circle(256)
    for alpha in (0.5, 1.0, math.sqrt(3.0)):
        report = check_r_alpha(circle, 0.99 * r_max_lemma(alpha, circle.sup_ii), alpha)
        assert report.passed, report.failures
        assert report.worst_slope <= alpha


def test_chart_geometry():
    circle = unit_circle(256)
    chart = langer_chart(circle, 10, 0.3)
    assert chart.ok
    assert np.all(np.diff(chart.y1) > 0)
    assert chart.y1[0] == pytest.approx(-0.3) and chart.y1[-1] == pytest.approx(0.3)
    # над касательной единичная окружность отходит на 1 - sqrt(1 - y1^2)
    assert abs(chart.evaluate(np.array([0.3]))[0]) == pytest.approx(1 - math.sqrt(1 - 0.09), rel=1e-2)


def test_chart_fails_beyond_the_radius():
    failure = langer_chart(unit_circle(64), 0, 1.5)
    assert not failure.ok
    assert failure.reason


def test_nested_coverings_within_k_power():
    circle = unit_circle(256)
    rho = 0.99 * r_max_lemma(1.0, 1.0) / 2.0
    atlases = cover_levels(circle, 0, rho, 3, alpha=1.0)
    assert [a.level for a in atlases] == [1, 2, 3]
    for smaller, larger in zip(atlases, atlases[1:]):
        centers = [c.center for c in larger.charts]
        assert [c.center for c in smaller.charts] == centers[: smaller.count]
    for atlas in atlases:
        assert atlas.count <= atlas.bound


def test_cover_preconditions():
    circle = unit_circle(128)
    with pytest.raises(PreconditionError):
        cover_levels(circle, 0, 0.1, 2, alpha=2.0)
    with pytest.raises(PreconditionError):
        cover_levels(circle, 0, r_max_lemma(1.0, 1.0), 2, alpha=1.0)
    with pytest.raises(PreconditionError):
        cover_levels(circle, 0, 0.1, 0)


def test_profile_generating_curve_is_covered():
    cylinder = cylinder_profile(64, radius=1.0)
    atlases = cover_levels(cylinder, 32, 0.15, 2, alpha=1.0)
    assert atlases[-1].count >= 1


def test_injectivity_and_embedding_constant():
    circle = unit_circle(256)
    inj = injectivity_lower_bound(circle)
    assert inj.bound == pytest.approx(1.0 / (2.0 * math.sqrt(2.0)))
    assert inj.consistent
    assert embedding_constant(circle) == pytest.approx(math.pi / 2.0, abs=1e-3)
    assert math.isinf(embedding_constant(limacon(128)))


def test_graph_over_distance():
    circle = unit_circle(256)
    rho = 0.99 * r_max_lemma(1.0, 1.0) / 2.0
    atlas = cover_levels(circle, 0, rho, 2)[-1]
    same = graph_over(circle, circle, atlas)
    assert same.ok and same.distance <= 1e-12
    wider = graph_over(unit_circle(256, radius=1.01), circle, atlas)
    assert wider.ok
    assert 0.005 < wider.distance < 0.05


def test_every_flow_snapshot_is_certified(circle_traj):
    immersions = [snap.immersion for snap in circle_traj.snapshots]
    for alpha in (0.5, 1.0, math.sqrt(3.0)):
        certificate = certify_snapshots(immersions, alpha)
        assert certificate.passed, certificate.failed
        assert certificate.checked == len(circle_traj)
        assert 0.0 < certificate.worst_ratio <= 1.0
        assert certificate.to_dict()["pass"]


def test_certificate_reports_failing_snapshots():
    certificate = certify_snapshots([unit_circle(64), limacon(256)], 1.0, fraction=50.0)
    assert not certificate.passed
    assert 0 in certificate.failed
    assert certify_snapshots([], 1.0).passed is False
