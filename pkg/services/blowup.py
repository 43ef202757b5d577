"""Центральные последовательности, параболическое раздутие и проверка предела.

Кадр j в момент s: Q_j (F(., t_j + s / Q_j^2) - x_c), где x_c = F(p̄, t_j) для
предельной вершины p̄ (гладкое раздутие) или x_0 (касательный поток). Сдвиг
Q_j |F(p_j, t_j) - F(p̄, t_j)| между выбранной и предельной вершиной пишется в отчёт. Геометрия между снимками
интерполируется линейно по t.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import LAB_CONFIG
from services.immersion import AxisymProfile, DiscreteCurve, DiscreteImmersion
from services.langer import as_curve, cover_ball, graph_over, r_max_lemma
from services.mcflow import FlowTrajectory

logger = logging.getLogger(__name__)

_BLOWUP = LAB_CONFIG["BLOWUP"]
CENTERINGS = ("smooth", "tangent")


class ScheduleError(ValueError):
    """Расписание t_j / t~_j вне диапазона траектории."""


class FrameIntervalError(ValueError):
    """s вне допустимого интервала кадра."""


@dataclass(frozen=True)
class CentralEntry:
    j: int
    snapshot: int
    vertex: int
    t: float
    q: float
    ttilde: Optional[float] = None

    @property
    def horizon(self) -> Optional[float]:
        """A_j = (t~_j - t_j) Q_j^2 для типа II."""
        if self.ttilde is None:
            return None
        return (self.ttilde - self.t) * self.q**2

    def interval(self) -> Tuple[float, float]:
        upper = 0.0 if self.ttilde is None else self.horizon
        return -self.q**2 * self.t, upper

    def to_dict(self) -> Dict[str, Any]:
        return {
            "j": self.j, "t_j": self.t, "Q_j": self.q, "ttilde_j": self.ttilde,
            "vertex": self.vertex, "snapshot": self.snapshot, "A_j": self.horizon,
        }


@dataclass
class CentralSequence:
    mode: str
    t_hat: float
    entries: List[CentralEntry] = field(default_factory=list)
    limit_vertex: Optional[int] = None
    warnings: List[str] = field(default_factory=list)

    def entry(self, j: int) -> CentralEntry:
        for item in self.entries:
            if item.j == j:
                return item
        raise KeyError(f"no central entry j={j}")


@dataclass(frozen=True, eq=False)
class BlowupFrame:
    j: int
    s: float
    t: float
    immersion: DiscreteImmersion
    center: np.ndarray
    centering: str
    central_vertex: int
    interval: Tuple[float, float]
    q: float = 1.0

    @property
    def sup_ii(self) -> float:
        return self.immersion.sup_ii

    @property
    def central_ii(self) -> float:
        return float(self.immersion.ii_norm[self.central_vertex])

    def to_dict(self) -> Dict[str, Any]:
        return {"j": self.j, "s": self.s, "Q": self.q, "sup_II": self.sup_ii, "central_II": self.central_ii}


def frechet_mean_vertex(imm: DiscreteImmersion, vertices: Sequence[int]) -> int:
    """Вершина из vertices с минимальной суммой квадратов индуцированных расстояний."""
    candidates = sorted(set(int(v) for v in vertices))
    if not candidates:
        raise ValueError("no vertices to average")
    costs = [float(np.sum(imm.distances_from(v)[candidates] ** 2)) for v in candidates]
    return candidates[int(np.argmin(costs))]


def _limit_vertex(traj: FlowTrajectory, fallback: Sequence[int]) -> int:
    history = traj.singularity.central_history if traj.singularity and traj.singularity.central_history else fallback
    return frechet_mean_vertex(traj.snapshots[-1].immersion, history)


def _t_hat(traj: FlowTrajectory, t_hat: Optional[float]) -> float:
    value = traj.t_hat if t_hat is None else t_hat
    if value is None:
        raise ScheduleError("trajectory has no singular time estimate")
    return float(value)


def central_sequence_typeI(
    traj: FlowTrajectory,
    schedule: Optional[Sequence[float]] = None,
    j_count: int = _BLOWUP["J_COUNT"],
    t_hat: Optional[float] = None,
) -> CentralSequence:
    """t_j = T(1 - 2^-j) по умолчанию; снимок с бегущим максимумом sup|II| на [0, t_j]."""
    t_hat = _t_hat(traj, t_hat)
    times, sups = traj.times, traj.sups
    if schedule is None:
        schedule = [t_hat * (1.0 - 2.0**-j) for j in range(1, j_count + 1)]
    entries = []
    for j, target in enumerate(schedule, start=1):
        if not times[0] <= target <= times[-1]:
            raise ScheduleError(f"t_{j}={target:.17g} outside [{times[0]:.17g}, {times[-1]:.17g}]")
        upto = np.flatnonzero(times <= target)
        best = int(upto[::-1][np.argmax(sups[upto][::-1])])
        snap = traj.snapshots[best]
        entries.append(CentralEntry(j=j, snapshot=best, vertex=snap.argmax, t=snap.t, q=snap.sup_ii))
    cs = CentralSequence(mode="TypeI", t_hat=t_hat, entries=entries)
    cs.limit_vertex = _limit_vertex(traj, [e.vertex for e in entries])
    return cs


def central_sequence_typeII(
    traj: FlowTrajectory,
    ttilde_schedule: Optional[Sequence[float]] = None,
    j_count: int = _BLOWUP["J_COUNT"],
    rate: float = _BLOWUP["TTILDE_RATE"],
    t_hat: Optional[float] = None,
) -> CentralSequence:
    """Перебор всех (p, t) из хранилища: max (t~_j - t)|II(p, t)|^2 при t <= t~_j."""
    times = traj.times
    if ttilde_schedule is None:
        t_hat = _t_hat(traj, t_hat)
        ttilde_schedule = [t_hat - (t_hat - times[0]) * rate**j for j in range(1, j_count + 1)]
    elif t_hat is None:
        t_hat = traj.t_hat if traj.t_hat is not None else float(max(ttilde_schedule))
    entries = []
    for j, ttilde in enumerate(ttilde_schedule, start=1):
        upto = np.flatnonzero(times < ttilde)
        if upto.size == 0:
            raise ScheduleError(f"ttilde_{j}={ttilde:.17g} precedes the first snapshot")
        best_key, best = None, None
        for k in upto:
            snap = traj.snapshots[int(k)]
            ii = snap.immersion.ii_norm
            products = (ttilde - snap.t) * ii**2
            # наибольшее произведение, затем наибольшая |II|, затем меньший индекс
            v = int(np.lexsort((-np.arange(ii.size), ii, products))[-1])
            key = (float(products[v]), float(ii[v]))
            if best_key is None or key > best_key:
                best_key, best = key, (int(k), v)
        k, v = best
        snap = traj.snapshots[k]
        entries.append(
            CentralEntry(j=j, snapshot=k, vertex=v, t=snap.t, q=float(snap.immersion.ii_norm[v]), ttilde=float(ttilde))
        )
    cs = CentralSequence(mode="TypeII", t_hat=float(t_hat), entries=entries)
    horizons = [e.horizon for e in entries]
    if any(b < a for a, b in zip(horizons, horizons[1:])):
        message = "(ttilde_j - t_j) Q_j^2 is not nondecreasing: " + ", ".join(f"{h:.4g}" for h in horizons)
        cs.warnings.append(message)
        logger.warning(message)
    cs.limit_vertex = _limit_vertex(traj, [e.vertex for e in entries])
    return cs


def central_point(imm: DiscreteImmersion, vertex: int) -> np.ndarray:
    """F(p) в плоскости; для профилей только осевая компонента."""
    point = np.array(imm.positions[vertex], dtype=float)
    if isinstance(imm, AxisymProfile):
        point[1] = 0.0
    return point


def _rescaled(imm: DiscreteImmersion, scale: float, center: np.ndarray) -> DiscreteImmersion:
    if isinstance(imm, AxisymProfile):
        return imm.rescaled(scale, float(center[0]))
    return imm.rescaled(scale, center)


def rescale(
    traj: FlowTrajectory,
    cs: CentralSequence,
    j: int,
    s_grid: Sequence[float],
    centering: str = "smooth",
    x0: Optional[np.ndarray] = None,
) -> List[BlowupFrame]:
    if centering not in CENTERINGS:
        raise ValueError(f"unknown centering {centering!r}")
    entry = cs.entry(j)
    lo, hi = entry.interval()
    snap = traj.snapshots[entry.snapshot]
    if centering == "smooth":
        anchor = entry.vertex if cs.limit_vertex is None else cs.limit_vertex
        center = central_point(snap.immersion, anchor)
    else:
        if x0 is None:
            x0 = estimate_singular_point(traj, cs)
        center = np.array(x0, dtype=float)
        if isinstance(snap.immersion, AxisymProfile):
            center[1] = 0.0
    frames = []
    for s in s_grid:
        if not lo < s <= hi:
            raise FrameIntervalError(f"s={s} outside ({lo:.6g}, {hi:.6g}] for j={j}")
        t = entry.t + s / entry.q**2
        if not traj.times[0] <= t <= traj.times[-1]:
            raise FrameIntervalError(f"s={s} maps to t={t:.17g} outside the stored trajectory")
        geometry = snap.immersion if s == 0 else traj.interpolate(t)
        frames.append(
            BlowupFrame(
                j=j, s=float(s), t=float(t), immersion=_rescaled(geometry, entry.q, center),
                center=center, centering=centering, central_vertex=entry.vertex, interval=(lo, hi), q=entry.q,
            )
        )
    return frames


@dataclass
class BoundReport:
    passed: bool
    max_ratio: float
    tolerance: float
    rows: List[Dict[str, float]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {"pass": self.passed, "max_ratio": self.max_ratio, "tolerance": self.tolerance, "rows": self.rows}


def check_rescaled_bound(
    frames: Sequence[BlowupFrame], cs: CentralSequence, j: int, tolerance: float = _BLOWUP["BOUND_TOL"]
) -> BoundReport:
    """|II_j|^2 <= A / (A - s) (тип II); для типа I при s <= 0 граница равна 1."""
    horizon = cs.entry(j).horizon
    rows, worst, passed = [], 0.0, True
    for frame in frames:
        if horizon is None:
            bound = 1.0
        elif frame.s >= horizon:
            # на самом горизонте оценка вырождается
            bound = math.inf
        else:
            bound = horizon / (horizon - frame.s)
        lhs = frame.sup_ii**2
        ok = lhs <= bound + tolerance
        passed &= ok
        if math.isfinite(bound):
            worst = max(worst, lhs / bound)
        rows.append({"s": frame.s, "sup_II2": lhs, "bound": bound, "pass": ok})
    return BoundReport(passed=bool(passed), max_ratio=worst, tolerance=tolerance, rows=rows)


def _aligned(frame: BlowupFrame) -> DiscreteCurve:
    """Центральная вершина в 0, касательная в ней вдоль e1."""
    curve = as_curve(frame.immersion)
    v = frame.central_vertex
    t = curve.tangents[v]
    rotation = np.array([t, [-t[1], t[0]]])
    return curve.with_vertices((curve.vertices - curve.vertices[v]) @ rotation.T)


@dataclass
class LimitReport:
    cauchy: bool
    distances: List[float]
    central_ii: float
    central_ok: Optional[bool]
    failures: List[str] = field(default_factory=list)
    limit: Optional[BlowupFrame] = None

    @property
    def verdict(self) -> str:
        """cauchy, chart_failure (graph_over не сработал) или divergent."""
        if self.cauchy:
            return "cauchy"
        if any(not math.isfinite(d) for d in self.distances):
            return "chart_failure"
        return "divergent"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "cauchy": self.cauchy,
            "verdict": self.verdict,
            "distances": self.distances,
            "central_II": self.central_ii,
            "central_ok": self.central_ok,
            "failures": self.failures,
        }


def successive_distances(
    frames: Sequence[BlowupFrame], levels: int = _BLOWUP["LIMIT_LEVELS"], alpha: float = 1.0
) -> Tuple[List[float], List[str]]:
    """graph_over соседних кадров по атласу вокруг центральной вершины следующего кадра."""
    aligned = [_aligned(frame) for frame in frames]
    distances, failures = [], []
    for k in range(len(frames) - 1):
        b, frame_b = aligned[k + 1], frames[k + 1]
        rho = r_max_lemma(alpha, frame_b.sup_ii) / 2.0
        atlas = cover_ball(b, frame_b.central_vertex, rho, levels, alpha=alpha, certify=False, sup_ii=frame_b.sup_ii)
        result = graph_over(aligned[k], b, atlas)
        if result.ok:
            distances.append(result.distance)
        else:
            distances.append(math.inf)
            failures.append(f"frames {frames[k].j}->{frame_b.j}: {result.reason} (chart {result.failed_chart})")
    return distances, failures


def is_cauchy(distances: Sequence[float], slack: float, floor: float) -> bool:
    if not distances or not all(math.isfinite(d) for d in distances):
        return False
    return all(b <= a * (1.0 + slack) + floor for a, b in zip(distances, distances[1:]))


def extract_limit(
    frames: Sequence[BlowupFrame],
    tol_limit: float = _BLOWUP["LIMIT_TOL"],
    slack: float = _BLOWUP["CAUCHY_SLACK"],
    floor: float = _BLOWUP["CAUCHY_FLOOR"],
    levels: int = _BLOWUP["LIMIT_LEVELS"],
) -> LimitReport:
    """Предел = последний кадр последовательности Коши; при s = 0 проверка |II| = 1 в центре."""
    if len(frames) < 3:
        raise ValueError(f"need at least 3 frames at a common s, got {len(frames)}")
    if len({frame.s for frame in frames}) != 1:
        raise ValueError("frames must share the rescaled time s")
    distances, failures = successive_distances(frames, levels)
    cauchy = is_cauchy(distances, slack, floor)
    last = frames[-1]
    central_ok = abs(last.central_ii - 1.0) <= tol_limit if last.s == 0 else None
    report = LimitReport(
        cauchy=cauchy, distances=distances, central_ii=last.central_ii, central_ok=central_ok,
        failures=failures, limit=last if cauchy else None,
    )
    if not cauchy:
        logger.warning(
            "Rescaled frames are not Cauchy (%s): %s", report.verdict, ", ".join(f"{d:.3g}" for d in distances)
        )
    return report


@dataclass
class UniformReport:
    cauchy: bool
    sup_distances: List[float]
    by_s: Dict[str, List[float]] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"cauchy": self.cauchy, "sup_distances": self.sup_distances, "by_s": self.by_s}


def uniform_convergence(
    traj: FlowTrajectory,
    cs: CentralSequence,
    s_grid: Sequence[float],
    centering: str = "smooth",
    slack: float = _BLOWUP["CAUCHY_SLACK"],
    floor: float = _BLOWUP["CAUCHY_FLOOR"],
) -> UniformReport:
    """sup по s в s_grid расстояний между кадрами j и j+1."""
    pairs = len(cs.entries) - 1
    sup = [0.0] * pairs
    by_s: Dict[str, List[float]] = {}
    for s in s_grid:
        frames, index = [], []
        for k, entry in enumerate(cs.entries):
            lo, hi = entry.interval()
            t = entry.t + s / entry.q**2
            if lo < s <= hi and traj.times[0] <= t <= traj.times[-1]:
                frames.extend(rescale(traj, cs, entry.j, [s], centering))
                index.append(k)
        if len(frames) < 2:
            continue
        distances, _ = successive_distances(frames)
        by_s[format(s, "g")] = distances
        for (a, b), d in zip(zip(index, index[1:]), distances):
            if b == a + 1:
                sup[a] = max(sup[a], d)
    return UniformReport(cauchy=is_cauchy(sup, slack, floor), sup_distances=sup, by_s=by_s)


def estimate_singular_point(traj: FlowTrajectory, cs: CentralSequence) -> np.ndarray:
    """x_0 из подгонки F(p, t) = x_0 + v sqrt(T - t) по хвосту, p = предельная вершина."""
    vertex = cs.limit_vertex if cs.limit_vertex is not None else cs.entries[-1].vertex
    if traj.singularity and traj.singularity.tail_indices:
        tail = np.asarray(traj.singularity.tail_indices)
    else:
        tail = np.arange(max(0, len(traj) - max(10, len(traj) // 3)), len(traj))
    times = traj.times[tail]
    keep = cs.t_hat - times > 0
    tail, times = tail[keep], times[keep]
    if tail.size < 2:
        raise ScheduleError("not enough snapshots before T to locate the singular point")
    points = np.array([central_point(traj.snapshots[int(k)].immersion, vertex) for k in tail])
    design = np.stack([np.ones_like(times), np.sqrt(cs.t_hat - times)], axis=1)
    coefficients, *_ = np.linalg.lstsq(design, points, rcond=None)
    return coefficients[0]


@dataclass
class OffsetReport:
    offsets: List[List[float]]
    norms: List[float]
    spread: float
    bounded: bool
    pick_norms: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "offsets": self.offsets, "norms": self.norms, "spread": self.spread, "bounded": self.bounded,
            "pick_offsets": self.pick_norms,
        }


def pick_offsets(traj: FlowTrajectory, cs: CentralSequence) -> List[float]:
    """Q_j |F(p_j, t_j) - F(p̄, t_j)|: насколько выбранная вершина ушла от предельной."""
    if cs.limit_vertex is None:
        return [0.0] * len(cs.entries)
    norms = []
    for entry in cs.entries:
        imm = traj.snapshots[entry.snapshot].immersion
        delta = central_point(imm, entry.vertex) - central_point(imm, cs.limit_vertex)
        norms.append(float(entry.q * np.linalg.norm(delta)))
    return norms


def centering_offsets(traj: FlowTrajectory, cs: CentralSequence, x0: np.ndarray) -> OffsetReport:
    """Q_j (x_0 - x_j), x_j = центр гладкого кадра F(p̄, t_j); ограниченность для типа I."""
    offsets = []
    for entry in cs.entries:
        anchor = entry.vertex if cs.limit_vertex is None else cs.limit_vertex
        x_j = central_point(traj.snapshots[entry.snapshot].immersion, anchor)
        offsets.append(entry.q * (np.asarray(x0, float) - x_j))
    norms = [float(np.linalg.norm(o)) for o in offsets]
    spread = max(norms) - min(norms)
    return OffsetReport(
        offsets=[[float(c) for c in o] for o in offsets],
        norms=norms,
        spread=spread,
        bounded=bool(max(norms) <= 10.0 * (1.0 + min(norms))),
        pick_norms=pick_offsets(traj, cs),
    )
