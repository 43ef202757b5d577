"""Карты Лангера на дискретных кривых и образующих профилей.

Карта в вершине q: поворот A_q переводит F(q) в 0 и касательную в ось y1;
берётся связная компонента вершин с |y1| < r, содержащая q. Карта является
графиком, если y1 строго монотонна вдоль компоненты.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from services.immersion import AxisymProfile, DiscreteCurve, DiscreteImmersion

logger = logging.getLogger(__name__)

MAX_ALPHA = math.sqrt(3.0)
PARALLEL_EPS = 1e-12


class PreconditionError(ValueError):
    """Нарушены условия построения покрытия (alpha, rho, сертификат)."""


def as_curve(imm: DiscreteImmersion) -> DiscreteCurve:
    """Профили обрабатываются через образующую в полуплоскости (x, u)."""
    if isinstance(imm, AxisymProfile):
        return imm.generating_curve()
    return imm


def r_max_lemma(alpha: float, sup_ii: float) -> float:
    """Радиус alpha (1 + alpha^2)^(-3/2) / sup|II|; бесконечен для плоских кусков."""
    if sup_ii <= 0.0:
        return math.inf
    return alpha * (1.0 + alpha**2) ** -1.5 / sup_ii


def covering_constant(m: int, alpha: float) -> int:
    """K(m, alpha): число шаров радиуса rho/(4 sqrt(1+alpha^2)), покрывающих шар радиуса 2 rho."""
    per_axis = 8.0 * math.sqrt(1.0 + alpha**2)
    if m == 1:
        return int(math.ceil(per_axis))
    if m == 2:
        return int(math.ceil(per_axis * math.sqrt(2.0))) ** 2
    raise ValueError(f"covering constant is implemented for m in (1, 2), got {m}")


@dataclass(frozen=True)
class ChartFailure:
    center: int
    radius: float
    reason: str
    witness: Optional[Tuple[int, int]] = None
    ok: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {"center": self.center, "reason": self.reason, "witness": list(self.witness or ())}


@dataclass(frozen=True, eq=False)
class LangerChart:
    center: int
    radius: float
    origin: np.ndarray
    frame: np.ndarray  # rows: tangent, normal at F(q)
    members: Tuple[int, ...]
    y1: np.ndarray  # increasing; includes interpolated boundary points
    y2: np.ndarray
    slopes: np.ndarray
    ok: bool = True

    @property
    def slope(self) -> float:
        return float(np.max(np.abs(self.slopes)))

    @property
    def size(self) -> int:
        return len(self.members)

    def to_local(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, float) - self.origin) @ self.frame.T

    def evaluate(self, y1: np.ndarray) -> np.ndarray:
        return np.interp(y1, self.y1, self.y2)

    def derivative(self, y1: np.ndarray) -> np.ndarray:
        return np.interp(y1, self.y1, self.slopes)

    def to_dict(self) -> Dict[str, Any]:
        return {"center": self.center, "slope": self.slope, "size": self.size}


ChartResult = Union[LangerChart, ChartFailure]


def _frame(curve: DiscreteCurve, q: int) -> np.ndarray:
    t = curve.tangents[q]
    return np.array([t, [-t[1], t[0]]])


def _component(y1: np.ndarray, q: int, radius: float, closed: bool) -> List[int]:
    """Упорядоченная по обходу компонента с |y1| < radius, содержащая q."""
    size = y1.size
    inside = np.abs(y1) < radius
    order = [q]
    for direction in (1, -1):
        chain = []
        j = q
        for _ in range(size - 1):
            j = j + direction
            if closed:
                j %= size
            elif not 0 <= j < size:
                break
            if not inside[j] or j == q:
                break
            chain.append(j)
        order = order + chain if direction == 1 else chain[::-1] + order
    return order


def _wrapped(order: List[int], size: int) -> bool:
    return len(set(order)) < len(order) or len(order) >= size


def _neighbours(curve: DiscreteCurve, i: int) -> List[int]:
    if curve.closed:
        return [(i - 1) % curve.size, (i + 1) % curve.size]
    return [j for j in (i - 1, i + 1) if 0 <= j < curve.size]


def _slopes(tangents: np.ndarray, frame: np.ndarray, oriented: bool = True) -> np.ndarray:
    """dy2/dy1 касательных в рамке карты; inf для вертикальных (или обращённых при oriented)."""
    local = tangents @ frame.T
    usable = local[:, 0] > 0 if oriented else local[:, 0] != 0
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(usable, local[:, 1] / local[:, 0], np.inf)


def _boundary_point(y: np.ndarray, slopes: np.ndarray, inner: int, outer: int, radius: float, side: float):
    """Пересечение отрезка inner-outer с y1 = side * radius (линейно)."""
    a, b = y[inner], y[outer]
    target = side * radius
    if (b[0] - a[0]) * side <= 0 or (b[0] - target) * side < 0 or (target - a[0]) * side < 0:
        return None
    w = (target - a[0]) / (b[0] - a[0])
    return target, a[1] + w * (b[1] - a[1]), slopes[inner] + w * (slopes[outer] - slopes[inner])


def _extend_to_boundary(curve: DiscreteCurve, y: np.ndarray, slopes: np.ndarray, order: List[int], radius: float):
    """Узлы компоненты плюс точки выхода на |y1| = radius."""
    members = set(order)
    y1, y2, sl = list(y[order, 0]), list(y[order, 1]), list(slopes[order])
    for inner, side in ((order[0], -1.0), (order[-1], 1.0)):
        for outer in _neighbours(curve, inner):
            if outer in members or not np.isfinite(slopes[outer]):
                continue
            point = _boundary_point(y, slopes, inner, outer, radius, side)
            if point is None:
                continue
            if side < 0:
                y1.insert(0, point[0])
                y2.insert(0, point[1])
                sl.insert(0, point[2])
            else:
                y1.append(point[0])
                y2.append(point[1])
                sl.append(point[2])
            break
    return np.asarray(y1), np.asarray(y2), np.asarray(sl)


def langer_chart(imm: DiscreteImmersion, q: int, radius: float) -> ChartResult:
    """Карта Лангера радиуса radius в вершине q либо ChartFailure со свидетелем."""
    if not radius > 0:
        raise ValueError("chart radius must be positive")
    curve = as_curve(imm)
    size = curve.size
    frame = _frame(curve, q)
    origin = curve.vertices[q]
    y = (curve.vertices - origin) @ frame.T
    order = _component(y[:, 0], q, radius, curve.closed)
    wrapped = _wrapped(order, size)
    if wrapped:
        half = size // 2
        order = [(q + k) % size for k in range(-half, size - half)]
    steps = np.diff(y[order, 0])
    if np.any(steps <= 0):
        k = int(np.argmax(steps <= 0))
        turned = order[k + 1]
        earlier = np.asarray(order[: k + 1])
        partner = int(earlier[np.argmin(np.abs(y[earlier, 0] - y[turned, 0]))])
        return ChartFailure(q, radius, "component is not a graph over the tangent line", (partner, turned))
    if wrapped:
        return ChartFailure(q, radius, "component wraps the whole curve")

    slopes_all = _slopes(curve.tangents, frame)
    if not np.all(np.isfinite(slopes_all[order])):
        bad = order[int(np.argmax(~np.isfinite(slopes_all[order])))]
        return ChartFailure(q, radius, "vertical tangent inside the chart", (q, bad))
    y1, y2, slopes = _extend_to_boundary(curve, y, slopes_all, order, radius)
    return LangerChart(
        center=q, radius=radius, origin=origin, frame=frame, members=tuple(int(i) for i in order),
        y1=y1, y2=y2, slopes=slopes,
    )


@dataclass
class RAlphaReport:
    alpha: float
    radius: float
    r_max: float
    passed: bool
    worst_slope: float
    worst_vertex: int
    failures: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alpha": self.alpha,
            "r": self.radius,
            "r_max_lemma": self.r_max,
            "pass": self.passed,
            "worst_slope": self.worst_slope,
            "worst_vertex": self.worst_vertex,
            "failures": self.failures,
        }


def check_r_alpha(imm: DiscreteImmersion, radius: float, alpha: float, vertices: Optional[Sequence[int]] = None) -> RAlphaReport:
    """Сертификат (r, alpha): в каждой вершине карта-график с наклоном <= alpha."""
    curve = as_curve(imm)
    centers = range(curve.size) if vertices is None else vertices
    worst, worst_vertex = 0.0, -1
    failures: List[Dict[str, Any]] = []
    for q in centers:
        chart = langer_chart(imm, int(q), radius)
        if not chart.ok:
            failures.append(chart.to_dict())
            continue
        if chart.slope > worst:
            worst, worst_vertex = chart.slope, int(q)
        if chart.slope > alpha:
            failures.append({"center": int(q), "reason": f"slope {chart.slope:.6g} > alpha", "witness": []})
    report = RAlphaReport(
        alpha=alpha, radius=radius, r_max=r_max_lemma(alpha, imm.sup_ii), passed=not failures,
        worst_slope=worst, worst_vertex=worst_vertex, failures=failures,
    )
    if failures:
        logger.warning("(r, alpha) check failed at %d vertices (r=%.6g, alpha=%.6g)", len(failures), radius, alpha)
    return report


@dataclass
class SnapshotCertificate:
    alpha: float
    fraction: float
    checked: int
    failed: List[int] = field(default_factory=list)
    worst_ratio: float = 0.0

    @property
    def passed(self) -> bool:
        return self.checked > 0 and not self.failed

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alpha": self.alpha, "fraction": self.fraction, "checked": self.checked, "failed": self.failed,
            "worst_slope_over_alpha": self.worst_ratio, "pass": self.passed,
        }


def certify_snapshots(immersions: Sequence[DiscreteImmersion], alpha: float, fraction: float = 0.99) -> SnapshotCertificate:
    """check_r_alpha на каждом снимке с r = fraction * r_max(alpha, sup|II| снимка)."""
    report = SnapshotCertificate(alpha=alpha, fraction=fraction, checked=0)
    for index, imm in enumerate(immersions):
        result = check_r_alpha(imm, fraction * r_max_lemma(alpha, imm.sup_ii), alpha)
        report.checked += 1
        report.worst_ratio = max(report.worst_ratio, result.worst_slope / alpha)
        if not result.passed:
            report.failed.append(index)
    if report.failed:
        logger.warning("(r, alpha) certificate failed on %d of %d snapshots", len(report.failed), report.checked)
    return report


@dataclass
class LangerAtlas:
    alpha: float
    rho: float
    level: int
    center: int
    r_max: float
    constant: int
    charts: List[LangerChart] = field(default_factory=list)

    @property
    def chart_radius(self) -> float:
        return self.rho / 4.0

    @property
    def count(self) -> int:
        return len(self.charts)

    @property
    def bound(self) -> int:
        return self.constant**self.level

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alpha": self.alpha,
            "r": self.chart_radius,
            "r_max_lemma": self.r_max,
            "charts": [chart.to_dict() for chart in self.charts],
            "covering": {"l": self.level, "rho": self.rho, "count": self.count, "K_pow_l": self.bound},
        }


def cover_levels(
    imm: DiscreteImmersion,
    q0: int,
    rho: float,
    max_level: int,
    alpha: float = 1.0,
    certify: bool = True,
    sup_ii: Optional[float] = None,
) -> List[LangerAtlas]:
    """Вложенные покрытия шаров B(q0, l rho / 2) картами радиуса rho/4, l = 1..max_level."""
    if alpha > MAX_ALPHA + 1e-12 or alpha <= 0:
        raise PreconditionError(f"alpha must lie in (0, sqrt(3)], got {alpha}")
    if max_level < 1 or rho <= 0:
        raise PreconditionError("need rho > 0 and level >= 1")
    r_max = r_max_lemma(alpha, imm.sup_ii if sup_ii is None else sup_ii)
    if rho > r_max / 2.0 * (1.0 + 1e-12):
        raise PreconditionError(f"rho={rho:.6g} exceeds r_max/2={r_max / 2.0:.6g}")
    curve = as_curve(imm)
    if certify:
        report = check_r_alpha(imm, min(2.0 * rho, r_max), alpha)
        if not report.passed:
            raise PreconditionError(f"immersion is not ({2.0 * rho:.6g}, {alpha})-certified")
    constant = covering_constant(1, alpha)
    from_q0 = curve.distances_from(q0)
    charts: List[LangerChart] = []
    covered = np.zeros(curve.size, dtype=bool)
    nearest = np.full(curve.size, np.inf)
    atlases = []

    def add(q: int) -> None:
        chart = langer_chart(imm, q, rho / 4.0)
        if not chart.ok:
            raise PreconditionError(f"no chart of radius {rho / 4.0:.6g} at vertex {q}: {chart.reason}")
        charts.append(chart)
        covered[list(chart.members)] = True
        np.minimum(nearest, curve.distances_from(q), out=nearest)

    for level in range(1, max_level + 1):
        target = from_q0 <= level * rho / 2.0
        if not charts:
            add(q0)
        while True:
            missing = np.flatnonzero(target & ~covered)
            if missing.size == 0:
                break
            add(int(missing[np.argmax(nearest[missing])]))
        atlases.append(
            LangerAtlas(alpha=alpha, rho=rho, level=level, center=q0, r_max=r_max,
                        constant=constant, charts=list(charts))
        )
        if len(charts) > constant**level:
            logger.warning("Covering of level %d uses %d > K^l=%d charts", level, len(charts), constant**level)
    return atlases


def cover_ball(
    imm: DiscreteImmersion,
    q0: int,
    rho: float,
    level: int,
    alpha: float = 1.0,
    certify: bool = True,
    sup_ii: Optional[float] = None,
) -> LangerAtlas:
    return cover_levels(imm, q0, rho, level, alpha=alpha, certify=certify, sup_ii=sup_ii)[-1]


@dataclass(frozen=True)
class InjectivityReport:
    bound: float
    true_value: Optional[float]
    infinite: bool

    @property
    def consistent(self) -> bool:
        return self.true_value is None or self.bound <= self.true_value

    def to_dict(self) -> Dict[str, Any]:
        return {"bound": self.bound, "true": self.true_value, "infinite": self.infinite,
                "consistent": self.consistent}


def injectivity_lower_bound(imm: DiscreteImmersion) -> InjectivityReport:
    """inj >= 1 / (2 sqrt(2) sup|II|); для замкнутой кривой точное значение L/2."""
    sup = imm.sup_ii
    true_value = imm.length / 2.0 if isinstance(imm, DiscreteCurve) and imm.closed else None
    if sup <= 0.0:
        return InjectivityReport(math.inf, true_value, True)
    return InjectivityReport(1.0 / (2.0 * math.sqrt(2.0) * sup), true_value, False)


def _segments_intersect(curve: DiscreteCurve) -> bool:
    """Есть ли пересечение (включая касание) несмежных рёбер."""
    v = curve.vertices
    starts = v if curve.closed else v[:-1]
    ends = np.roll(v, -1, axis=0) if curve.closed else v[1:]
    count = starts.shape[0]
    p, r = starts[:, None, :], (ends - starts)[:, None, :]
    q, s = starts[None, :, :], (ends - starts)[None, :, :]

    def cross(a, b):
        return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]

    denom = cross(r, s)
    qp = q - p
    lengths = np.linalg.norm(r, axis=-1) * np.linalg.norm(s, axis=-1)
    parallel = np.abs(denom) <= PARALLEL_EPS * lengths
    with np.errstate(divide="ignore", invalid="ignore"):
        t = cross(qp, s) / denom
        u = cross(qp, r) / denom
    proper = ~parallel & (t >= 0) & (t <= 1) & (u >= 0) & (u <= 1)
    collinear = parallel & (np.abs(cross(qp, r)) <= PARALLEL_EPS * np.linalg.norm(qp, axis=-1) * np.linalg.norm(r, axis=-1))
    i, j = np.meshgrid(np.arange(count), np.arange(count), indexing="ij")
    gap = np.abs(i - j)
    if curve.closed:
        gap = np.minimum(gap, count - gap)
    adjacent = gap <= 1
    if np.any((proper & ~adjacent)):
        return True
    if np.any(collinear & ~adjacent):
        # коллинеарные несмежные рёбра пересекаются, если проекции перекрываются
        rr = np.einsum("...k,...k->...", r, r)
        t0 = np.einsum("...k,...k->...", qp, r) / np.where(rr > 0, rr, 1.0)
        t1 = t0 + np.einsum("...k,...k->...", s, r) / np.where(rr > 0, rr, 1.0)
        overlap = (np.maximum(t0, t1) >= 0) & (np.minimum(t0, t1) <= 1)
        return bool(np.any(collinear & ~adjacent & overlap))
    return False


def embedding_constant(imm: DiscreteImmersion) -> float:
    """kappa = sup d_g / d_h по парам вершин; +inf при самопересечении."""
    curve = as_curve(imm)
    if _segments_intersect(curve):
        return math.inf
    s = curve.arclength
    d_g = np.abs(s[:, None] - s[None, :])
    if curve.closed:
        d_g = np.minimum(d_g, curve.length - d_g)
    d_h = np.linalg.norm(curve.vertices[:, None, :] - curve.vertices[None, :, :], axis=-1)
    off = ~np.eye(curve.size, dtype=bool)
    if np.any(d_h[off] == 0.0):
        return math.inf
    return float(np.max(d_g[off] / d_h[off]))


@dataclass
class GraphOverResult:
    ok: bool
    distance: float = math.inf
    per_chart: List[float] = field(default_factory=list)
    failed_chart: Optional[int] = None
    reason: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {"ok": self.ok, "distance": self.distance, "per_chart": self.per_chart,
                "failed_chart": self.failed_chart, "reason": self.reason}


def _sheet_over(curve: DiscreteCurve, chart: LangerChart):
    """Кусок curve, являющийся графиком над картой chart, либо причина отказа."""
    y = chart.to_local(curve.vertices)
    inside = np.flatnonzero(np.abs(y[:, 0]) < chart.radius)
    if inside.size == 0:
        return None, "no overlap"
    seed = int(inside[np.argmin(np.abs(y[inside, 1]))])
    if abs(y[seed, 1]) > chart.radius:
        return None, "no overlap"
    order = _component(y[:, 0], seed, chart.radius, curve.closed)
    if _wrapped(order, curve.size):
        return None, "not a graph (wraps)"
    if len(order) > 1 and y[order[-1], 0] < y[order[0], 0]:
        order = order[::-1]
    if np.any(np.diff(y[order, 0]) <= 0):
        return None, "not a graph (fold)"
    slopes_all = _slopes(curve.tangents, chart.frame, oriented=False)
    if not np.all(np.isfinite(slopes_all[order])):
        return None, "not a graph (vertical tangent)"
    return _extend_to_boundary(curve, y, slopes_all, order, chart.radius), ""


def graph_over(a: DiscreteImmersion, b: DiscreteImmersion, atlas: LangerAtlas, min_coverage: float = 0.5) -> GraphOverResult:
    """C^1-расстояние между a и b по картам атласа b (max по картам)."""
    curve_a = as_curve(a)
    distances: List[float] = []
    for index, chart in enumerate(atlas.charts):
        sheet, reason = _sheet_over(curve_a, chart)
        if sheet is None:
            return GraphOverResult(False, failed_chart=index, reason=reason, per_chart=distances)
        y1, y2, slopes = sheet
        lo, hi = max(y1[0], chart.y1[0]), min(y1[-1], chart.y1[-1])
        width = chart.y1[-1] - chart.y1[0]
        if hi - lo < min_coverage * width:
            return GraphOverResult(False, failed_chart=index, reason="insufficient coverage", per_chart=distances)
        grid = np.concatenate([[lo], chart.y1[(chart.y1 > lo) & (chart.y1 < hi)], [hi]])
        c0 = np.max(np.abs(np.interp(grid, y1, y2) - chart.evaluate(grid)))
        c1 = np.max(np.abs(np.interp(grid, y1, slopes) - chart.derivative(grid)))
        distances.append(float(c0 + c1))
    return GraphOverResult(True, distance=max(distances, default=0.0), per_chart=distances)
