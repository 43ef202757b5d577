"""Монотонная величина Хёйскена, тождество масштабирования и самосжимающиеся шаблоны.

Квадратура: трапеции по отрезкам ломаной (для профилей по образующей с плотностью
|S^{m-1}| u^{m-1}); отрезок дробится, пока ядро меняется меньше чем на WEIGHT_VARIATION,
и отбрасывается, если ядро на нём всюду ниже WEIGHT_CUTOFF.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from config import LAB_CONFIG
from services.immersion import AxisymProfile, DiscreteCurve, DiscreteImmersion, sphere_area
from services.mcflow import FlowTrajectory

logger = logging.getLogger(__name__)

_SHRINKER = LAB_CONFIG["SHRINKER"]
CLASSES = ("Sphere", "Cylinder", "Unknown")
MAX_PIECES = 4096


class KernelTimeError(ValueError):
    """t >= t0: ядро не определено."""


class OffAxisCenterError(ValueError):
    """Центр ядра для профиля должен лежать на оси вращения."""


def _dimension(imm: DiscreteImmersion) -> int:
    return imm.m if isinstance(imm, AxisymProfile) else 1


def _normals(imm: DiscreteImmersion) -> np.ndarray:
    return imm.outward_normals if isinstance(imm, AxisymProfile) else imm.normals


def _segments(imm: DiscreteImmersion):
    if isinstance(imm, DiscreteCurve) and imm.closed:
        a = np.arange(imm.size)
        return a, np.roll(a, -1)
    a = np.arange(imm.size - 1)
    return a, a + 1


def _on_axis(imm: DiscreteImmersion, point) -> np.ndarray:
    point = np.asarray(point, dtype=float).reshape(2)
    if isinstance(imm, AxisymProfile) and point[1] != 0.0:
        raise OffAxisCenterError(f"profile kernels need a center on the axis, got {point.tolist()}")
    return point


@dataclass
class _Samples:
    points: np.ndarray
    weights: np.ndarray
    kernel: np.ndarray
    segment: np.ndarray
    fraction: np.ndarray

    def interpolate(self, nodal: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return (1.0 - self.fraction) * nodal[a[self.segment]] + self.fraction * nodal[b[self.segment]]


def _quadrature(
    imm: DiscreteImmersion,
    x0: np.ndarray,
    tau: float,
    variation: float = _SHRINKER["WEIGHT_VARIATION"],
    cutoff: float = _SHRINKER["WEIGHT_CUTOFF"],
) -> _Samples:
    X = imm.positions
    a, b = _segments(imm)
    A, E = X[a], X[b] - X[a]
    L = np.linalg.norm(E, axis=1)
    proj = np.clip(np.einsum("ij,ij->i", x0 - A, E) / L**2, 0.0, 1.0)
    d_min = np.linalg.norm(A + proj[:, None] * E - x0, axis=1)
    d_max = np.maximum(np.linalg.norm(A - x0, axis=1), np.linalg.norm(X[b] - x0, axis=1))
    live = np.flatnonzero(d_min**2 <= -4.0 * tau * math.log(cutoff))
    pieces = np.clip(np.ceil(L[live] * d_max[live] / (2.0 * tau) / variation), 1, MAX_PIECES).astype(int)

    counts = pieces + 1
    segment = np.repeat(live, counts)
    starts = np.repeat(np.cumsum(counts) - counts, counts)
    local = np.arange(int(counts.sum())) - starts
    k = np.repeat(pieces, counts)
    fraction = local / k
    points = A[segment] + fraction[:, None] * E[segment]
    weights = np.where((local == 0) | (local == k), 0.5, 1.0) * L[segment] / k

    m = _dimension(imm)
    if isinstance(imm, AxisymProfile):
        weights = weights * sphere_area(m) * points[:, 1] ** (m - 1)
    r2 = np.sum((points - x0) ** 2, axis=1)
    kernel = (4.0 * math.pi * tau) ** (-m / 2.0) * np.exp(-r2 / (4.0 * tau))
    return _Samples(points, weights, kernel, segment, fraction)


def _tau(t0: float, t: float) -> float:
    tau = t0 - t
    if not tau > 0.0:
        raise KernelTimeError(f"kernel needs t < t0, got t={t!r}, t0={t0!r}")
    return tau


def _box_mask(samples: _Samples, box_center: Optional[np.ndarray], box_radius: Optional[float]) -> np.ndarray:
    if box_radius is None:
        return np.ones(samples.weights.size, dtype=bool)
    return np.linalg.norm(samples.points - box_center, axis=1) <= box_radius


def theta(imm: DiscreteImmersion, x0, t0: float, t: float) -> float:
    """Θ = ∫ (4π(t0 - t))^{-m/2} exp(-|x - x0|^2 / (4(t0 - t))) dH^m."""
    tau = _tau(t0, t)
    samples = _quadrature(imm, _on_axis(imm, x0), tau)
    return float(np.sum(samples.weights * samples.kernel))


def shrinker_field(imm: DiscreteImmersion, x0: np.ndarray, tau: float) -> np.ndarray:
    """(H + (x - x0)^⊥ / (2 tau)) . N по вершинам."""
    offsets = np.einsum("ij,ij->i", imm.positions - x0, _normals(imm))
    return imm.normal_curvature + offsets / (2.0 * tau)


def _residual_integral(
    imm: DiscreteImmersion,
    x0: np.ndarray,
    tau: float,
    box_center: Optional[np.ndarray] = None,
    box_radius: Optional[float] = None,
):
    samples = _quadrature(imm, x0, tau)
    a, b = _segments(imm)
    values = samples.interpolate(shrinker_field(imm, x0, tau), a, b)
    mask = _box_mask(samples, box_center, box_radius)
    total = float(np.sum((samples.weights * samples.kernel * values**2)[mask]))
    if box_radius is None:
        return total, 0
    distances = np.linalg.norm(samples.points - box_center, axis=1)
    ambiguous = int(np.count_nonzero(np.abs(distances - box_radius) <= 1e-9 * max(box_radius, 1.0)))
    return total, ambiguous


def theta_derivative_rhs(imm: DiscreteImmersion, x0, t0: float, t: float) -> float:
    """-∫ |H + (x - x0)^⊥ / (2(t0 - t))|^2 ρ dH^m; всегда <= 0."""
    tau = _tau(t0, t)
    total, _ = _residual_integral(imm, _on_axis(imm, x0), tau)
    return -total


@dataclass
class MonotoneSeries:
    center: List[float]
    t0: float
    times: np.ndarray
    theta: np.ndarray
    rhs: np.ndarray
    step_tol: float
    deriv_tol: float
    violations: List[Dict[str, float]] = field(default_factory=list)
    mismatches: List[Dict[str, float]] = field(default_factory=list)
    quadrature: Dict[str, float] = field(default_factory=dict)

    @property
    def fd_dtheta(self) -> np.ndarray:
        fd = np.full(self.times.size, np.nan)
        fd[1:] = np.diff(self.theta) / np.diff(self.times)
        return fd

    @property
    def monotone(self) -> bool:
        return not self.violations

    @property
    def derivative_ok(self) -> bool:
        return not self.mismatches

    @property
    def passed(self) -> bool:
        return self.monotone and self.derivative_ok

    def rows(self):
        for row in zip(self.times, self.theta, self.rhs, self.fd_dtheta):
            yield tuple(float(v) for v in row)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "x0": self.center,
            "t0": self.t0,
            "samples": int(self.times.size),
            "theta_first": float(self.theta[0]),
            "theta_last": float(self.theta[-1]),
            "monotone": self.monotone,
            "derivative_ok": self.derivative_ok,
            "pass": self.passed,
            "step_tol": self.step_tol,
            "deriv_tol": self.deriv_tol,
            "violations": self.violations,
            "mismatches": self.mismatches,
            "quadrature": self.quadrature,
        }


def monotonicity_check(
    traj: FlowTrajectory,
    x0,
    t0: float,
    step_tol: float = _SHRINKER["MONO_STEP_TOL"],
    deriv_tol: float = _SHRINKER["MONO_DERIV_TOL"],
    deriv_floor: float = _SHRINKER["MONO_DERIV_FLOOR"],
    resolved_gap: float = 0.0,
) -> MonotoneSeries:
    """Θ и правая часть по всем снимкам с t < t0; разности сверяются со средним RHS на концах шага.

    Производная сверяется только при t0 - t > resolved_gap.
    """
    snaps = [s for s in traj.snapshots if s.t < t0]
    if len(snaps) < 2:
        raise KernelTimeError(f"need at least two snapshots before t0={t0!r}")
    x0 = np.asarray(x0, dtype=float)
    times = np.array([s.t for s in snaps])
    values = np.array([theta(s.immersion, x0, t0, s.t) for s in snaps])
    rhs = np.array([theta_derivative_rhs(s.immersion, x0, t0, s.t) for s in snaps])
    series = MonotoneSeries(
        center=[float(c) for c in x0], t0=float(t0), times=times, theta=values, rhs=rhs,
        step_tol=step_tol, deriv_tol=deriv_tol,
        quadrature={"variation": _SHRINKER["WEIGHT_VARIATION"], "cutoff": _SHRINKER["WEIGHT_CUTOFF"]},
    )
    for k in range(1, times.size):
        dt = times[k] - times[k - 1]
        change = values[k] - values[k - 1]
        if change > step_tol * values[k - 1]:
            series.violations.append({"t": float(times[k]), "relative_increase": float(change / values[k - 1])})
        predicted = 0.5 * (rhs[k] + rhs[k - 1]) * dt
        if t0 - times[k] <= resolved_gap:
            continue
        if abs(change - predicted) > deriv_tol * abs(predicted) + deriv_floor * values[k - 1]:
            series.mismatches.append(
                {"t": float(times[k]), "fd_dtheta": float(change / dt), "rhs_mean": float(predicted / dt)}
            )
    if series.violations:
        logger.warning("Theta increases at %d of %d steps", len(series.violations), times.size - 1)
    logger.info(
        "Monotonicity about x0=%s t0=%.17g: theta %.6g -> %.6g, %d violations, %d derivative mismatches",
        series.center, t0, values[0], values[-1], len(series.violations), len(series.mismatches),
    )
    return series


@dataclass
class ScalingReport:
    q: float
    a: float
    b: float
    k_box: Optional[float]
    lhs: float
    rhs: float
    samples: int
    ambiguous_clips: int = 0

    @property
    def relative(self) -> float:
        scale = max(abs(self.lhs), abs(self.rhs))
        return 0.0 if scale == 0.0 else abs(self.lhs - self.rhs) / scale

    @property
    def passed(self) -> bool:
        return self.relative <= 1e-3 or max(abs(self.lhs), abs(self.rhs)) <= 1e-12

    def to_dict(self) -> Dict[str, Any]:
        return {
            "Q": self.q, "a": self.a, "b": self.b, "K": self.k_box, "lhs": self.lhs, "rhs": self.rhs,
            "relative": self.relative, "pass": self.passed, "samples": self.samples,
            "ambiguous_clips": self.ambiguous_clips,
        }


def _rescale(imm: DiscreteImmersion, q: float, center: np.ndarray) -> DiscreteImmersion:
    if isinstance(imm, AxisymProfile):
        return imm.rescaled(q, float(center[0]))
    return imm.rescaled(q, center)


def scaling_identity_check(
    traj: FlowTrajectory,
    q: float,
    x0,
    a: float,
    b: float,
    k_box: Optional[float] = None,
    t0: Optional[float] = None,
    center=None,
    t_center: Optional[float] = None,
) -> ScalingReport:
    """Двойной интеграл невязки по раздутому потоку (s в [a, b], шар K) против исходного (шар K/Q).

    Раздутие y = Q(x - center), s = Q^2 (t - t_center); по умолчанию центр (x0, t0).
    """
    t0 = traj.t_hat if t0 is None else t0
    if t0 is None:
        raise KernelTimeError("scaling identity needs t0 (no singular time on the trajectory)")
    x0 = np.asarray(x0, dtype=float)
    center = x0 if center is None else np.asarray(center, dtype=float)
    t_center = t0 if t_center is None else t_center
    y0, s0 = q * (x0 - center), q**2 * (t0 - t_center)
    lhs_t, lhs_v, rhs_t, rhs_v, ambiguous = [], [], [], [], 0
    for snap in traj.snapshots:
        s = q**2 * (snap.t - t_center)
        if not (a <= s <= b and snap.t < t0):
            continue
        imm = snap.immersion
        frame = _rescale(imm, q, center)
        box_frame = None if k_box is None else k_box
        box_orig = None if k_box is None else k_box / q
        left, clips_l = _residual_integral(frame, _on_axis(frame, y0), s0 - s, np.zeros(2), box_frame)
        right, clips_r = _residual_integral(imm, _on_axis(imm, x0), t0 - snap.t, center, box_orig)
        ambiguous += clips_l + clips_r
        lhs_t.append(s)
        lhs_v.append(left)
        rhs_t.append(snap.t)
        rhs_v.append(right)
    if len(lhs_t) < 2:
        raise ValueError(f"fewer than two snapshots with s in [{a}, {b}]")
    report = ScalingReport(
        q=float(q), a=float(a), b=float(b), k_box=k_box,
        lhs=float(trapezoid(lhs_v, lhs_t)), rhs=float(trapezoid(rhs_v, rhs_t)),
        samples=len(lhs_t), ambiguous_clips=ambiguous,
    )
    if ambiguous:
        logger.warning("Scaling identity: %d quadrature nodes lie on the box boundary", ambiguous)
    return report


@dataclass
class ShrinkerReport:
    alpha: float
    residual: float
    normalized_residual: float
    shrinker_class: str
    radius_fit: Optional[float]
    radius_spread: float
    profile_spread: Optional[float]
    degenerate: bool
    tolerance: float
    window: Optional[float] = None

    @property
    def alpha_negative(self) -> bool:
        return math.isfinite(self.alpha) and self.alpha < 0.0

    @property
    def accepted(self) -> bool:
        return self.shrinker_class != "Unknown"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alpha": self.alpha,
            "residual": self.residual,
            "normalized_residual": self.normalized_residual,
            "class": self.shrinker_class,
            "radius_fit": self.radius_fit,
            "radius_spread": self.radius_spread,
            "profile_spread": self.profile_spread,
            "degenerate": self.degenerate,
            "alpha_nonnegative": not self.alpha_negative,
            "tolerance": self.tolerance,
            "window": self.window,
        }


def _spread(values: np.ndarray) -> float:
    mean = float(np.mean(values))
    return math.inf if mean <= 0.0 else float((values.max() - values.min()) / mean)


def shrinker_residual(
    imm: DiscreteImmersion,
    center=None,
    window: Optional[float] = None,
    tolerance: float = _SHRINKER["RESIDUAL_TOL"],
    template_spread: float = _SHRINKER["TEMPLATE_SPREAD"],
    min_nodes: int = _SHRINKER["WINDOW_MIN_NODES"],
) -> ShrinkerReport:
    """Подгонка H = α (x - c)^⊥ взвешенными наименьшими квадратами и сравнение с шаблонами."""
    c = np.zeros(2) if center is None else np.asarray(center, dtype=float).reshape(2)
    m = _dimension(imm)
    X = imm.positions
    weights = imm.segment_weights
    graph_profile = isinstance(imm, AxisymProfile) and imm.chart == "graph"
    if isinstance(imm, AxisymProfile):
        c = np.array([c[0], 0.0])
        weights = weights * sphere_area(m) * imm.radii ** (m - 1)
    mask = np.ones(imm.size, dtype=bool)
    if window is not None and graph_profile:
        reach = np.abs(X[:, 0] - c[0])
        needed = min(max(int(min_nodes), 3), imm.size)
        if np.count_nonzero(reach <= window) < needed:
            wider = float(np.sort(reach)[needed - 1])
            logger.warning("Window %.3g around x=%.6g holds fewer than %d nodes; widened to %.3g", window, c[0], needed, wider)
            window = wider
        mask = reach <= window
    w, H = weights[mask], imm.normal_curvature[mask]
    offsets = X[mask] - c
    p = np.einsum("ij,ij->i", offsets, _normals(imm)[mask])
    norm_p = float(np.sum(w * p**2))
    degenerate = norm_p <= 1e-14 * max(float(np.sum(w * np.sum(offsets**2, axis=1))), 1e-300)
    alpha = math.nan if degenerate else float(np.sum(w * H * p) / norm_p)
    residual = float(np.sum(w * H**2)) if degenerate else float(np.sum(w * (H - alpha * p) ** 2))
    scale = float(np.sum(w * H**2))
    normalized = residual / scale if scale > 0.0 else (0.0 if residual == 0.0 and not degenerate else math.inf)

    radius_spread = _spread(np.linalg.norm(offsets, axis=1))
    profile_spread = _spread(imm.values[mask]) if graph_profile else None
    shrinker_class, radius_fit = "Unknown", None
    if degenerate:
        logger.warning("Shrinker fit is degenerate: (x - c)^⊥ vanishes")
    elif alpha >= 0.0:
        logger.warning("Shrinker fit has alpha=%.6g >= 0", alpha)
    elif normalized < tolerance:
        if radius_spread < template_spread:
            shrinker_class, radius_fit = "Sphere", math.sqrt(-m / alpha)
        elif profile_spread is not None and profile_spread < template_spread:
            shrinker_class, radius_fit = "Cylinder", math.sqrt(-(m - 1) / alpha)
    return ShrinkerReport(
        alpha=alpha, residual=residual, normalized_residual=normalized, shrinker_class=shrinker_class,
        radius_fit=radius_fit, radius_spread=radius_spread, profile_spread=profile_spread,
        degenerate=bool(degenerate), tolerance=tolerance, window=window if graph_profile else None,
    )


@dataclass
class ExtinctionFit:
    s_star: float
    slope: float
    horizon: float

    @property
    def extinct(self) -> bool:
        return self.slope < 0.0 and 0.0 < self.s_star <= self.horizon

    def to_dict(self) -> Dict[str, Any]:
        return {"s_star": self.s_star, "slope": self.slope, "horizon": self.horizon, "extinct": self.extinct}


def extinction_time(frames: Sequence, horizon: float = _SHRINKER["EXTINCTION_HORIZON"]) -> ExtinctionFit:
    """Подгонка sup|II|^{-2} = c (s* - s) по кадрам одного j; для сферы и цилиндра закон точный."""
    s = np.array([frame.s for frame in frames], dtype=float)
    if np.unique(s).size < 2:
        raise ValueError("extinction fit needs frames at two or more rescaled times")
    y = np.array([frame.sup_ii for frame in frames]) ** -2.0
    slope, intercept = np.polyfit(s, y, 1)
    s_star = -intercept / slope if slope != 0.0 else math.inf
    return ExtinctionFit(s_star=float(s_star), slope=float(slope), horizon=horizon)


@dataclass
class BlowupVerdict:
    mode: str
    shrinker: ShrinkerReport
    extinction: Optional[ExtinctionFit]
    template_radius: Optional[float]
    passed: bool
    note: str = ""
    radius_error: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mode": self.mode,
            "shrinker": self.shrinker.to_dict(),
            "extinction": None if self.extinction is None else self.extinction.to_dict(),
            "template_radius": self.template_radius,
            "radius_error": self.radius_error,
            "pass": self.passed,
            "note": self.note,
        }


def classify_blowup(
    mode: str,
    limit_frame,
    frames: Sequence,
    center=None,
    window: float = _SHRINKER["WINDOW"],
    radius_tol: float = _SHRINKER["RADIUS_TOL"],
    t_hat: Optional[float] = None,
) -> BlowupVerdict:
    """Тип I: предел Sphere/Cylinder и вымирание раздутия; тип II: не компактный самосжимающийся.

    Радиус шаблона: sqrt(2 k tau), tau = Q^2 (T - t) в масштабе кадра, k = m (сфера) или m - 1
    (цилиндр). Без T берётся sqrt(k) / |II| в центре.
    """
    imm = limit_frame.immersion
    graph_profile = isinstance(imm, AxisymProfile) and imm.chart == "graph"
    report = shrinker_residual(imm, center, window if graph_profile else None)
    try:
        extinction = extinction_time(frames)
    except ValueError as exc:
        logger.warning("No extinction fit: %s", exc)
        extinction = None
    extinct = bool(extinction and extinction.extinct)

    template = None
    if report.shrinker_class != "Unknown" and limit_frame.central_ii > 0.0:
        m = _dimension(imm)
        principal = m if report.shrinker_class == "Sphere" else m - 1
        if t_hat is not None and t_hat > limit_frame.t:
            template = math.sqrt(2.0 * principal * limit_frame.q**2 * (t_hat - limit_frame.t))
        else:
            template = math.sqrt(principal) / limit_frame.central_ii
    radius_error = None
    if template and report.radius_fit is not None:
        radius_error = abs(report.radius_fit / template - 1.0)

    if mode == "TypeI":
        radius_ok = radius_error is not None and radius_error <= radius_tol
        passed = report.shrinker_class in ("Sphere", "Cylinder") and extinct and radius_ok
        shown = "n/a" if radius_error is None else f"{radius_error:.3g}"
        note = f"{report.shrinker_class} limit, R_fit off template by {shown}, extinct={extinct}"
    elif mode == "TypeII":
        passed = (report.shrinker_class == "Unknown" or report.normalized_residual >= report.tolerance) and not extinct
        note = f"{report.shrinker_class} limit, residual {report.normalized_residual:.3g}, extinct={extinct}"
    else:
        passed, note = False, f"no verdict for {mode} trajectories"
    log = logger.info if passed else logger.warning
    log("Blow-up verdict (%s): %s, pass=%s", mode, note, passed)
    return BlowupVerdict(mode=mode, shrinker=report, extinction=extinction, template_radius=template,
                         passed=passed, note=note, radius_error=radius_error)
