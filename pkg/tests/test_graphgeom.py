import math

import numpy as np
import pytest
import sympy as sp

from services.corpus import PolynomialPatchSpec, random_patch_specs
from services.graphgeom import (
    GraphPatch,
    StencilError,
    check_eigen_sandwich,
    check_hessian_bound,
    check_third_derivative_bound,
    curve_identity_residual,
    induced_metric,
    second_fundamental_form,
    third_derivative_constant,
)
from utils.suites import cubic_origin_case

x, y = sp.symbols("x y")
# quadratic map R^2 -> R^2: central stencils reproduce Df and D2f exactly
F1 = x**2 + x * y
F2 = y**2 / 2 - x


def _quadratic_patch() -> GraphPatch:
    spec = PolynomialPatchSpec(
        m=2, n=2, radius=0.5, nodes=9,
        terms=((0, (2, 0), 1.0), (0, (1, 1), 1.0), (1, (0, 2), 0.5), (1, (1, 0), -1.0)),
        label="quadratic",
    )
    return spec.to_patch()


def _oracle(point):
    """|II|^2 и g через нормальную проекцию вложения (x, y, f(x, y)) в R^4."""
    embedding = sp.Matrix([x, y, F1, F2])
    tangents = embedding.jacobian([x, y])
    g = tangents.T * tangents
    g_inv = g.inv()
    projection = sp.eye(4) - tangents * g_inv * tangents.T
    second = [[projection * sp.diff(embedding, a, b) for b in (x, y)] for a in (x, y)]
    norm2 = 0
    for i in range(2):
        for j in range(2):
            for k in range(2):
                for l in range(2):
                    norm2 += g_inv[i, k] * g_inv[j, l] * second[i][j].dot(second[k][l])
    subs = {x: point[0], y: point[1]}
    return float(norm2.subs(subs)), np.array(g.subs(subs), dtype=float)


def test_metric_and_sff_match_symbolic_oracle():
    patch = _quadratic_patch()
    metric = induced_metric(patch)
    sff = second_fundamental_form(patch, metric)
    for node in (0, 7, 12, 24):
        expected_ii, expected_g = _oracle(patch.interior_coords[node])
        assert np.allclose(metric.g[node], expected_g, rtol=1e-10, atol=1e-12)
        assert sff.ii_norm2[node] == pytest.approx(expected_ii, rel=1e-10)


def test_bounds_hold_on_random_corpus():
    for spec in random_patch_specs(40, seed=7):
        patch = spec.to_patch()
        assert check_hessian_bound(patch).passed, spec.label
        assert check_third_derivative_bound(patch).passed, spec.label
        assert check_eigen_sandwich(patch).passed, spec.label


def test_curve_identity_is_equality():
    curves = [s for s in random_patch_specs(60, seed=11) if s.m == 1 and s.n == 1]
    assert curves
    for spec in curves:
        assert curve_identity_residual(spec.to_patch()) <= 1e-9


def test_curve_identity_rejects_higher_dimensions():
    with pytest.raises(ValueError):
        curve_identity_residual(_quadratic_patch())


def test_cubic_at_origin_is_sharp():
    lhs, rhs = cubic_origin_case()
    assert lhs == pytest.approx(1.0, abs=1e-9)
    assert rhs == pytest.approx(1.0, abs=1e-9)


def test_third_derivative_constant():
    assert third_derivative_constant(1, 1) == pytest.approx(2.0 * math.sqrt(7.0))
    assert third_derivative_constant(2, 2) == pytest.approx(2.0 * math.sqrt(12.0))


def test_flat_patch_has_zero_curvature():
    patch = GraphPatch.sample(lambda c: 0.3 * c[..., :1] - 0.2 * c[..., 1:2], 2, 1, 0.5, 7)
    sff = second_fundamental_form(patch)
    assert np.max(np.abs(sff.ii_norm2)) <= 1e-20
    report = check_hessian_bound(patch)
    assert report.passed and report.stats["nodes"] == 9


def test_stencil_errors():
    with pytest.raises(StencilError):
        GraphPatch(m=1, n=1, radius=0.5, values=np.zeros((4, 1)))
    values = np.zeros((9, 1))
    values[3] = np.nan
    with pytest.raises(StencilError):
        GraphPatch(m=1, n=1, radius=0.5, values=values)
    with pytest.raises(StencilError):
        GraphPatch(m=2, n=1, radius=0.5, values=np.zeros((9, 8, 1)))


def _projected_sff(spec: PolynomialPatchSpec, point) -> tuple:
    """g и |II|^2 вложения x -> (x, f(x)) через ортогональную проекцию на нормальное пространство."""
    xs = sp.symbols(f"x0:{spec.m}")
    comps = [sp.Integer(0)] * spec.n
    for component, powers, coef in spec.terms:
        comps[component] += coef * sp.Mul(*[v**p for v, p in zip(xs, powers)])
    subs = dict(zip(xs, [float(c) for c in point]))
    df = np.array([[float(sp.diff(f, v).subs(subs)) for v in xs] for f in comps]).reshape(spec.n, spec.m)
    d2f = np.array(
        [[[float(sp.diff(f, a, b).subs(subs)) for b in xs] for a in xs] for f in comps]
    ).reshape(spec.n, spec.m, spec.m)
    tangents = np.vstack([np.eye(spec.m), df])
    g = tangents.T @ tangents
    g_inv = np.linalg.inv(g)
    projection = np.eye(spec.m + spec.n) - tangents @ g_inv @ tangents.T
    hessians = np.concatenate([np.zeros((spec.m, spec.m, spec.m)), d2f], axis=0)
    second = np.einsum("AB,Bij->ijA", projection, hessians)
    norm2 = np.einsum("ik,jl,ijA,klA->", g_inv, g_inv, second, second)
    return g, float(norm2)


def test_random_quadratic_patches_match_projected_oracle():
    specs = random_patch_specs(48, seed=23, degree=2)
    assert len(specs) > 40
    for spec in specs:
        patch = spec.to_patch()
        metric = induced_metric(patch)
        sff = second_fundamental_form(patch, metric)
        for node in (0, len(patch.interior_coords) // 2, len(patch.interior_coords) - 1):
            expected_g, expected_ii = _projected_sff(spec, patch.interior_coords[node])
            assert np.allclose(metric.g[node], expected_g, rtol=1e-9, atol=1e-12), spec.label
            assert sff.ii_norm2[node] == pytest.approx(expected_ii, rel=1e-9, abs=1e-12), spec.label


def _hemisphere(radius: float, nodes: int) -> GraphPatch:
    return GraphPatch.sample(
        lambda c: np.sqrt(radius**2 - np.sum(c**2, axis=-1, keepdims=True)), 2, 1, 0.5, nodes,
        label="hemisphere",
    )


def test_hemisphere_has_umbilic_curvature():
    sff = second_fundamental_form(_hemisphere(2.0, 33))
    # сфера радиуса R в R^3: |II|^2 = 2 / R^2
    assert np.allclose(sff.ii_norm2, 0.5, rtol=1e-2)


def test_sff_converges_with_second_order():
    errors = []
    for nodes in (17, 33):
        patch = _hemisphere(2.0, nodes)
        origin = int(np.argmin(np.linalg.norm(patch.interior_coords, axis=1)))
        assert np.allclose(patch.interior_coords[origin], 0.0, atol=1e-12)
        errors.append(abs(second_fundamental_form(patch).ii_norm2[origin] - 0.5))
    assert errors[1] > 0.0
    assert 3.5 < errors[0] / errors[1] < 4.5
