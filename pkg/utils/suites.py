"""Наборы инвариантов для `curvlab.py verify`.

Каждый набор возвращает строки (name, ok, details) в духе офлайн-тестера команд
и словарь для JSON-отчёта.
"""

import logging
import math
from functools import lru_cache
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from config import LAB_CONFIG
from services.corpus import PolynomialPatchSpec, load_patch_corpus, random_patch_specs
from services.graphgeom import (
    check_eigen_sandwich,
    check_hessian_bound,
    check_third_derivative_bound,
    christoffel_and_nabla_sff,
    curve_identity_residual,
    induced_metric,
    third_derivative_constant,
)
from services.immersion import unit_circle
from services.langer import (
    certify_snapshots,
    check_r_alpha,
    cover_levels,
    covering_constant,
    embedding_constant,
    injectivity_lower_bound,
    r_max_lemma,
)
from services.mcflow import FlowSettings, FlowTrajectory, analyze, run
from services.scenarios import limacon
from services.shrinker import monotonicity_check

logger = logging.getLogger(__name__)

Row = Tuple[str, bool, str]
SUITES = ("lemmas", "atlas", "monotonicity")
SHRINKING_CIRCLE_THETA = math.sqrt(2.0 * math.pi) * math.exp(-0.5)
CURVE_IDENTITY_TOL = 1e-9


@lru_cache(maxsize=4)
def _circle_flow(nodes: int, cap: float) -> FlowTrajectory:
    """Поток единичной окружности до sup|II| = cap; общий для atlas и monotonicity."""
    traj = run(unit_circle(nodes), FlowSettings(curvature_cap=cap))
    analyze(traj)
    return traj


def _corpus(verify: Dict[str, Any]) -> List[PolynomialPatchSpec]:
    nodes = {int(k): int(v) for k, v in verify["PATCH_NODES"].items()}
    specs = random_patch_specs(
        verify["PATCH_COUNT"], verify["PATCH_SEED"], degree=verify["PATCH_DEGREE"],
        radius=verify["PATCH_RADIUS"], nodes_by_dim=nodes,
    )
    if verify.get("CORPUS"):
        specs.extend(load_patch_corpus(verify["CORPUS"]))
    return specs


def cubic_origin_case(nodes: int = 9, radius: float = 0.5) -> Tuple[float, float]:
    """f(x) = x^3/6: в x = 0 обе части оценки третьих производных равны 1."""
    spec = PolynomialPatchSpec(m=1, n=1, radius=radius, nodes=nodes, terms=((0, (3,), 1.0 / 6.0),), label="cubic")
    patch = spec.to_patch()
    metric = induced_metric(patch)
    sff = christoffel_and_nabla_sff(patch, metric)
    node = int(np.argmin(np.abs(patch.interior_coords[:, 0])))
    d3f = patch.jet["d3f"][node]
    lhs = float(np.sqrt(np.sum(d3f**2)))
    hess2 = float(np.sum(sff.h[node] ** 2))
    rhs = (1.0 + metric.df_norm2[node]) ** 2 * math.sqrt(max(sff.nabla_ii_norm2[node], 0.0))
    rhs += third_derivative_constant(1, 1) * hess2 * math.sqrt(metric.df_norm2[node])
    return lhs, float(rhs)


def lemmas_suite(verify: Optional[Dict[str, Any]] = None) -> Tuple[List[Row], Dict[str, Any]]:
    verify = verify or LAB_CONFIG["VERIFY"]
    specs = _corpus(verify)
    checks = (
        ("hessian_bound", check_hessian_bound, verify["SECOND_ORDER_TOL"]),
        ("third_derivative_bound", check_third_derivative_bound, verify["THIRD_ORDER_TOL"]),
        ("eigen_sandwich", check_eigen_sandwich, verify["EIGEN_TOL"]),
    )
    rows: List[Row] = []
    report: Dict[str, Any] = {"patches": len(specs)}
    patches = [spec.to_patch() for spec in specs]
    for name, check, tolerance in checks:
        failed, worst, worst_label = 0, math.inf, ""
        for patch in patches:
            result = check(patch, tolerance)
            failed += not result.passed
            if result.worst_slack < worst:
                worst, worst_label = result.worst_slack, patch.label
        rows.append((name, failed == 0, f"{len(patches)} patches, worst slack {worst:.3e} ({worst_label})"))
        report[name] = {"pass": failed == 0, "failed": failed, "worst_slack": worst, "worst_patch": worst_label,
                        "tolerance": tolerance}

    curves = [patch for patch in patches if patch.m == 1 and patch.n == 1]
    residual = max((curve_identity_residual(patch) for patch in curves), default=0.0)
    rows.append(("curve_identity", residual <= CURVE_IDENTITY_TOL, f"{len(curves)} patches, max rel {residual:.3e}"))
    report["curve_identity"] = {"pass": residual <= CURVE_IDENTITY_TOL, "max_relative": residual, "patches": len(curves)}

    lhs, rhs = cubic_origin_case()
    cubic_ok = abs(lhs - 1.0) <= 1e-9 and abs(rhs - 1.0) <= 1e-9
    rows.append(("cubic_origin", cubic_ok, f"LHS={lhs:.12g} RHS={rhs:.12g}"))
    report["cubic_origin"] = {"pass": cubic_ok, "lhs": lhs, "rhs": rhs}
    return rows, report


def _covering_rows(name: str, imm, alpha: float, levels: int, rows: List[Row], report: Dict[str, Any]) -> None:
    r_max = r_max_lemma(alpha, imm.sup_ii)
    q0 = int(np.argmax(imm.ii_norm))
    atlases = cover_levels(imm, q0, 0.99 * r_max / 2.0, levels, alpha=alpha)
    counts = [atlas.count for atlas in atlases]
    bounds = [atlas.bound for atlas in atlases]
    within = all(c <= b for c, b in zip(counts, bounds))
    nested = all(
        [c.center for c in a.charts] == [c.center for c in b.charts][: a.count] for a, b in zip(atlases, atlases[1:])
    )
    rows.append((f"{name}_covering", within and nested, f"counts {counts} vs K^l {bounds}, nested={nested}"))
    report[f"{name}_covering"] = {"pass": within and nested, "counts": counts, "K_pow_l": bounds, "nested": nested,
                                  "K": covering_constant(1, alpha)}


def atlas_suite(verify: Optional[Dict[str, Any]] = None) -> Tuple[List[Row], Dict[str, Any]]:
    verify = verify or LAB_CONFIG["VERIFY"]
    circle = unit_circle(verify["ATLAS_N"])
    rows: List[Row] = []
    report: Dict[str, Any] = {"n": verify["ATLAS_N"], "alphas": {}}
    for alpha in verify["ATLAS_ALPHAS"]:
        r_max = r_max_lemma(alpha, circle.sup_ii)
        result = check_r_alpha(circle, 0.99 * r_max, alpha)
        rows.append((f"r_alpha[{alpha:.6g}]", result.passed, f"r_max={r_max:.6f}, worst slope {result.worst_slope:.4g}"))
        report["alphas"][format(alpha, ".6g")] = result.to_dict()

    inj = injectivity_lower_bound(circle)
    rows.append(("injectivity", inj.consistent, f"bound {inj.bound:.6f} <= true {inj.true_value:.6f}"))
    report["injectivity"] = inj.to_dict()

    kappa = embedding_constant(circle)
    rows.append(("embedding_constant", math.isfinite(kappa) and kappa >= 1.0, f"kappa={kappa:.6g}"))
    report["embedding_constant"] = kappa

    _covering_rows("circle", circle, 1.0, 3, rows, report)
    _covering_rows("limacon", limacon(verify["ATLAS_N"]), 1.0, 3, rows, report)

    traj = _circle_flow(int(verify["FLOW_N"]), float(verify["FLOW_CAP"]))
    immersions = [snap.immersion for snap in traj.snapshots]
    report["snapshots"] = {}
    for alpha in verify["ATLAS_ALPHAS"]:
        cert = certify_snapshots(immersions, alpha)
        rows.append((
            f"snapshots_r_alpha[{alpha:.6g}]", cert.passed,
            f"{cert.checked - len(cert.failed)}/{cert.checked} snapshots at 0.99 r_max, worst slope/alpha {cert.worst_ratio:.4g}",
        ))
        report["snapshots"][format(alpha, ".6g")] = cert.to_dict()
    return rows, report


def monotonicity_suite(verify: Optional[Dict[str, Any]] = None) -> Tuple[List[Row], Dict[str, Any]]:
    """Короткий поток окружности: Θ около (центр, T) постоянна, около T + 0.1 убывает."""
    verify = verify or LAB_CONFIG["VERIFY"]
    nodes, cap = int(verify["FLOW_N"]), float(verify["FLOW_CAP"])
    traj = _circle_flow(nodes, cap)
    singularity = traj.singularity
    rows: List[Row] = []
    report: Dict[str, Any] = {"nodes": nodes, "cap": cap, "kind": singularity.kind, "t_hat": traj.t_hat}
    if traj.t_hat is None:
        rows.append(("singular_time", False, singularity.note))
        return rows, report
    centered = monotonicity_check(traj, (0.0, 0.0), traj.t_hat)
    spread = float(np.max(np.abs(centered.theta / SHRINKING_CIRCLE_THETA - 1.0)))
    rows.append(("theta_self_similar", spread <= 5e-3, f"max |theta/1.52035 - 1| = {spread:.3e}"))
    rows.append(("theta_monotone_centered", centered.monotone, f"{len(centered.violations)} violations"))
    shifted = monotonicity_check(traj, (0.0, 0.0), traj.t_hat + 0.1)
    decreasing = bool(np.all(np.diff(shifted.theta) < 0.0))
    rows.append(("theta_decreasing_shifted", decreasing and shifted.monotone, f"theta {shifted.theta[0]:.6g} -> {shifted.theta[-1]:.6g}"))
    rows.append(("theta_derivative", shifted.derivative_ok, f"{len(shifted.mismatches)} mismatches"))
    report.update({"centered": centered.to_dict(), "shifted": shifted.to_dict(), "self_similar_spread": spread})
    return rows, report


def run_suite(name: str, verify: Optional[Dict[str, Any]] = None) -> Tuple[List[Row], Dict[str, Any]]:
    if name == "lemmas":
        return lemmas_suite(verify)
    if name == "atlas":
        return atlas_suite(verify)
    if name == "monotonicity":
        return monotonicity_suite(verify)
    raise ValueError(f"unknown suite {name!r}")
