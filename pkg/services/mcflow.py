"""Интегрирование потока средней кривизны, оценка времени сингулярности, тип I/II.

step: линейно-неявный шаг Эйлера (неявная лапласова часть, явная нелинейность).
run: удвоение шага с экстраполяцией Ричардсона и I-регулятором,
dt никогда не превышает C_CFL / sup|II|^2.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from config import LAB_CONFIG
from services.immersion import (
    AxisymProfile,
    CurveError,
    DiscreteCurve,
    DiscreteImmersion,
    SingularProfileError,
    regrid_profile,
    resample_arclength,
    resample_curvature,
)

logger = logging.getLogger(__name__)

_DISC = LAB_CONFIG["DISCRETIZATION"]
_CAPS = LAB_CONFIG["CAPS"]
_CLASSIFY = LAB_CONFIG["CLASSIFY"]

TIE_RTOL = 1e-9
TERMINAL_EVENTS = ("curvature_cap", "t_max", "pinch", "step_failure", "dt_underflow", "max_steps")
KINDS = ("TypeI", "TypeII", "Indeterminate", "NoSingularityDetected")
RESAMPLE_MODES = ("arclength", "curvature")


class FlowError(RuntimeError):
    """Шаг не удался (линейная система, вырожденная геометрия)."""


class PinchReached(FlowError):
    """Профиль коснулся оси на этом шаге."""


class EstimationError(RuntimeError):
    """Хвост траектории не позволяет оценить T."""


@dataclass(frozen=True)
class FlowSettings:
    c_cfl: float = _DISC["C_CFL"]
    curvature_cap: float = _CAPS["CURVATURE_CAP"]
    t_max: float = _CAPS["T_MAX"]
    resample_every: int = _DISC["RESAMPLE_EVERY"]
    resample_mode: str = _DISC["RESAMPLE_MODE"]
    resample_weight: float = _DISC["RESAMPLE_WEIGHT"]
    step_tol: float = _DISC["STEP_TOL"]
    dt_min: float = _DISC["DT_MIN"]
    snapshot_growth: float = _DISC["SNAPSHOT_GROWTH"]
    max_steps: int = _DISC["MAX_STEPS"]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class ClassifySettings:
    tail_fraction: float = _CLASSIFY["TAIL_FRACTION"]
    band_ratio: float = _CLASSIFY["BAND_RATIO"]
    growth_threshold: float = _CLASSIFY["GROWTH_THRESHOLD"]
    c_floor: float = _CLASSIFY["C_FLOOR"]
    min_snapshots: int = _CLASSIFY["MIN_SNAPSHOTS"]
    sigma_guard: float = _CLASSIFY["SIGMA_GUARD"]
    compact_tol: float = _CLASSIFY["COMPACT_TOL"]


@dataclass(frozen=True, eq=False)
class Snapshot:
    index: int
    t: float
    immersion: DiscreteImmersion
    sup_ii: float
    argmax: int
    measure: float

    @property
    def positions(self) -> np.ndarray:
        return self.immersion.positions


@dataclass
class SingularityClass:
    kind: str
    t_hat: Optional[float] = None
    sigma: Optional[float] = None
    type_one_constant: Optional[float] = None
    s_min: Optional[float] = None
    s_max: Optional[float] = None
    trend: Optional[float] = None
    floor_ok: Optional[bool] = None
    compact_type: bool = False
    central_history: List[int] = field(default_factory=list)
    tail_indices: List[int] = field(default_factory=list)
    note: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class FlowTrajectory:
    settings: FlowSettings = field(default_factory=FlowSettings)
    terminal_event: str = ""
    accepted_steps: int = 0
    rejected_steps: int = 0
    t_hat: Optional[float] = None
    sigma: Optional[float] = None
    singularity: Optional[SingularityClass] = None
    _snapshots: List[Snapshot] = field(default_factory=list, repr=False)

    @property
    def snapshots(self) -> Tuple[Snapshot, ...]:
        return tuple(self._snapshots)

    def __len__(self) -> int:
        return len(self._snapshots)

    def append(self, t: float, imm: DiscreteImmersion, argmax: Optional[int] = None) -> Snapshot:
        if self._snapshots and not t > self._snapshots[-1].t:
            raise ValueError(f"snapshot times must increase: {t!r} after {self._snapshots[-1].t!r}")
        sup = imm.sup_ii
        if not math.isfinite(sup):
            raise FlowError(f"non-finite sup|II| at t={t}")
        if argmax is None:
            previous = self._snapshots[-1].argmax if self._snapshots else None
            argmax = stable_argmax(imm, previous)
        snap = Snapshot(len(self._snapshots), float(t), imm, float(sup), int(argmax), float(imm.measure))
        self._snapshots.append(snap)
        return snap

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self._snapshots])

    @property
    def sups(self) -> np.ndarray:
        return np.array([s.sup_ii for s in self._snapshots])

    def interpolate(self, t: float) -> DiscreteImmersion:
        """Геометрия в момент t: линейно по t между соседними снимками."""
        times = self.times
        if not times[0] <= t <= times[-1]:
            raise ValueError(f"t={t} outside the stored range [{times[0]}, {times[-1]}]")
        k = int(np.searchsorted(times, t, side="right")) - 1
        k = min(max(k, 0), len(times) - 1)
        if k == len(times) - 1 or t == times[k]:
            return self._snapshots[k].immersion
        w = (t - times[k]) / (times[k + 1] - times[k])
        a, b = self._snapshots[k].immersion, self._snapshots[k + 1].immersion
        if isinstance(a, DiscreteCurve):
            return a.with_vertices((1 - w) * a.vertices + w * b.vertices)
        later = b.values
        if not np.array_equal(a.coords, b.coords):
            # сетка перестроена между снимками: b переносится на узлы a
            later = np.interp(a.coords, b.coords, b.values)
        return a.with_values((1 - w) * a.values + w * later)


def stable_argmax(imm: DiscreteImmersion, previous: Optional[int] = None) -> int:
    """argmax |II|; почти равные максимумы решаются в пользу ближайшей к previous вершины."""
    ii = imm.ii_norm
    top = float(np.max(ii))
    candidates = np.flatnonzero(ii >= top * (1.0 - TIE_RTOL))
    if previous is None or len(candidates) == 1:
        return int(candidates[0])
    if previous in candidates:
        return int(previous)
    distances = imm.distances_from(min(previous, imm.size - 1))[candidates]
    return int(candidates[int(np.argmin(distances))])


# --- one step -----------------------------------------------------------------

def _tridiagonal(lower: np.ndarray, main: np.ndarray, upper: np.ndarray, periodic: bool):
    """Row i: lower[i]*x[i-1] + main[i]*x[i] + upper[i]*x[i+1]; без periodic края отражаются."""
    size = main.size
    idx = np.arange(size)
    rows = [idx, idx[1:], idx[:-1]]
    cols = [idx, idx[1:] - 1, idx[:-1] + 1]
    data = [main, lower[1:], upper[:-1]]
    if periodic:
        rows += [np.array([0]), np.array([size - 1])]
        cols += [np.array([size - 1]), np.array([0])]
    else:
        rows += [np.array([0]), np.array([size - 1])]
        cols += [np.array([1]), np.array([size - 2])]
    data += [lower[:1], upper[-1:]]
    matrix = sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    )
    return matrix.tocsc()


def _solve(matrix, rhs: np.ndarray) -> np.ndarray:
    try:
        solution = spsolve(matrix, rhs)
    except (RuntimeError, ValueError) as exc:
        raise FlowError(f"linear solve failed: {exc}") from exc
    solution = np.asarray(solution, dtype=float).reshape(rhs.shape)
    if not np.all(np.isfinite(solution)):
        raise FlowError("linear solve produced non-finite values")
    return solution


def _curve_step(curve: DiscreteCurve, dt: float) -> np.ndarray:
    if not curve.closed:
        raise FlowError("only closed curves can be flowed")
    e = curve.edge_lengths
    e_prev = np.roll(e, 1)
    mass = 0.5 * (e + e_prev)
    matrix = _tridiagonal(-1.0 / e_prev, mass / dt + 1.0 / e + 1.0 / e_prev, -1.0 / e, periodic=True)
    return _solve(matrix, curve.vertices * (mass / dt)[:, None])


def _profile_operator(profile: AxisymProfile):
    """Коэффициенты неявной части (при u_-1, u_0, u_+1) и явная часть правой стороны."""
    d1, _ = profile.derivatives
    m = profile.m
    if profile.chart == "graph":
        a = 1.0 / (1.0 + d1**2)
        explicit = -(m - 1) / profile.values
        if not profile.uniform:
            hm, hp = profile.steps
            lower = 2.0 * a / (hm * (hm + hp))
            upper = 2.0 * a / (hp * (hm + hp))
            return lower, -(lower + upper), upper, explicit
        h = profile.spacing
        return a / h**2, -2.0 * a / h**2, a / h**2, explicit
    h = profile.spacing
    rho, theta = profile.values, profile.coords
    speed2 = rho**2 + d1**2
    a = 1.0 / speed2
    sin = np.sin(theta)
    poles = np.abs(sin) <= 1e-12
    cot = np.where(poles, 0.0, np.cos(theta) / np.where(poles, 1.0, sin))
    b = (m - 1) * cot / rho**2
    a = np.where(poles, a + (m - 1) / rho**2, a)
    lower = a / h**2 - b / (2 * h)
    upper = a / h**2 + b / (2 * h)
    explicit = -(rho**2 + 2 * d1**2) / (rho * speed2) - (m - 1) / rho
    return lower, -2.0 * a / h**2, upper, explicit


def _profile_step(profile: AxisymProfile, dt: float) -> np.ndarray:
    lower, main, upper, explicit = _profile_operator(profile)
    matrix = _tridiagonal(-dt * lower, 1.0 - dt * main, -dt * upper, periodic=profile.boundary == "periodic")
    values = _solve(matrix, profile.values + dt * explicit)
    if np.any(values <= 0.0):
        raise PinchReached(f"profile reached the axis (min {values.min():.3e})")
    return values


def _raw_step(imm: DiscreteImmersion, dt: float) -> np.ndarray:
    if isinstance(imm, DiscreteCurve):
        return _curve_step(imm, dt)
    return _profile_step(imm, dt)


def _rebuild(imm: DiscreteImmersion, data: np.ndarray) -> DiscreteImmersion:
    if isinstance(imm, DiscreteCurve):
        return imm.with_vertices(data)
    return imm.with_values(data)


def step(imm: DiscreteImmersion, dt: float) -> DiscreteImmersion:
    """Один линейно-неявный шаг Эйлера потока dF/dt = H."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    try:
        return _rebuild(imm, _raw_step(imm, dt))
    except SingularProfileError as exc:
        raise PinchReached(str(exc)) from exc
    except CurveError as exc:
        raise FlowError(str(exc)) from exc


def _doubled_step(imm: DiscreteImmersion, dt: float) -> Tuple[DiscreteImmersion, float]:
    """Экстраполяция Ричардсона 2*half - full; ошибка в единицах 1/sup|II|."""
    full = _raw_step(imm, dt)
    half = _raw_step(step(imm, 0.5 * dt), 0.5 * dt)
    error = float(np.max(np.abs(half - full))) * max(imm.sup_ii, 1e-300)
    try:
        return _rebuild(imm, 2.0 * half - full), error
    except SingularProfileError as exc:
        raise PinchReached(str(exc)) from exc
    except CurveError as exc:
        raise FlowError(str(exc)) from exc


def redistribute(imm: DiscreteImmersion, settings: FlowSettings) -> DiscreteImmersion:
    """Перераспределение узлов между шагами; arclength не трогает профили."""
    if settings.resample_mode not in RESAMPLE_MODES:
        raise ValueError(f"unknown resample mode {settings.resample_mode!r}")
    if isinstance(imm, DiscreteCurve):
        if settings.resample_mode == "curvature":
            return resample_curvature(imm, imm.size, settings.resample_weight)
        return resample_arclength(imm, imm.size)
    if settings.resample_mode == "curvature" and imm.chart == "graph" and imm.boundary == "neumann":
        try:
            return regrid_profile(imm, settings.resample_weight)
        except SingularProfileError as exc:
            logger.debug("Keeping the grid: %s", exc)
    return imm


def _cfl_dt(imm: DiscreteImmersion, settings: FlowSettings) -> float:
    sup = imm.sup_ii
    if sup <= 0.0:
        return settings.t_max
    return settings.c_cfl / sup**2


def run(initial: DiscreteImmersion, settings: Optional[FlowSettings] = None) -> FlowTrajectory:
    """Интегрирует до sup|II| >= curvature_cap или t >= t_max."""
    settings = settings or FlowSettings()
    traj = FlowTrajectory(settings=settings)
    imm, t = initial, 0.0
    traj.append(t, imm)
    stored_sup = traj.snapshots[-1].sup_ii
    dt = _cfl_dt(imm, settings)
    since_resample = 0
    pinch_seen = failure_seen = False
    logger.info(
        "Flow start: %s, %d nodes, sup|II|=%.6g, cap=%g",
        type(initial).__name__, initial.size, stored_sup, settings.curvature_cap,
    )

    while True:
        if imm.sup_ii >= settings.curvature_cap:
            event = "curvature_cap"
            break
        if t >= settings.t_max - settings.dt_min:
            event = "t_max"
            break
        if traj.accepted_steps >= settings.max_steps:
            event = "max_steps"
            break
        dt = min(dt, _cfl_dt(imm, settings), settings.t_max - t)
        if dt < settings.dt_min:
            event = "pinch" if pinch_seen else ("step_failure" if failure_seen else "dt_underflow")
            break
        try:
            candidate, error = _doubled_step(imm, dt)
        except PinchReached as exc:
            logger.debug("t=%.17g dt=%.3e: %s", t, dt, exc)
            pinch_seen = True
            traj.rejected_steps += 1
            dt *= 0.25
            continue
        except FlowError as exc:
            logger.debug("t=%.17g dt=%.3e: %s", t, dt, exc)
            failure_seen = True
            traj.rejected_steps += 1
            dt *= 0.25
            continue
        if error > settings.step_tol:
            traj.rejected_steps += 1
            dt *= max(0.2, 0.9 * math.sqrt(settings.step_tol / error))
            continue

        t += dt
        imm = candidate
        traj.accepted_steps += 1
        pinch_seen = failure_seen = False
        since_resample += 1
        if settings.resample_every and since_resample >= settings.resample_every:
            imm = redistribute(imm, settings)
            since_resample = 0
        dt *= 2.0 if error == 0.0 else min(2.0, max(0.2, 0.9 * math.sqrt(settings.step_tol / error)))

        sup = imm.sup_ii
        growth = settings.snapshot_growth
        if sup >= stored_sup * growth or sup <= stored_sup / growth or sup >= settings.curvature_cap:
            traj.append(t, imm)
            stored_sup = sup

    if t > traj.snapshots[-1].t:
        traj.append(t, imm)
    traj.terminal_event = event
    logger.info(
        "Flow stop: %s at t=%.17g, sup|II|=%.6g, %d snapshots, %d accepted / %d rejected steps",
        event, t, imm.sup_ii, len(traj), traj.accepted_steps, traj.rejected_steps,
    )
    return traj


# --- singular time and type ----------------------------------------------------

def _log_tail(times: np.ndarray, t_hat: float, fraction: float) -> np.ndarray:
    """Индексы с log(T - t) в нижней доле fraction диапазона."""
    gaps = t_hat - times
    valid = np.flatnonzero(gaps > 0)
    if valid.size == 0:
        return valid
    logs = np.log(gaps[valid])
    cut = logs.min() + fraction * (logs.max() - logs.min())
    return valid[logs <= cut]


def _fit_root(times: np.ndarray, sups: np.ndarray) -> Tuple[float, float, float]:
    y = sups ** -2.0
    (slope, intercept), cov = np.polyfit(times, y, 1, cov=True)
    if not slope < 0:
        raise EstimationError(f"sup|II|^-2 does not decrease on the tail (slope {slope:.3e})")
    t_hat = -intercept / slope
    grad = np.array([intercept / slope**2, -1.0 / slope])
    sigma = float(math.sqrt(max(float(grad @ cov @ grad), 0.0)))
    return float(t_hat), sigma, float(slope)


def estimate_singular_time(
    traj: FlowTrajectory, settings: Optional[ClassifySettings] = None, max_iter: int = 8
) -> Tuple[float, float]:
    """(T, sigma) из линейной подгонки sup|II|^-2 по t на хвосте."""
    settings = settings or ClassifySettings()
    times, sups = traj.times, traj.sups
    count = len(times)
    if count < settings.min_snapshots:
        raise EstimationError(f"{count} snapshots, need at least {settings.min_snapshots}")
    tail = np.arange(count - max(settings.min_snapshots, int(math.ceil(settings.tail_fraction * count))), count)
    t_hat = sigma = None
    for _ in range(max_iter):
        tail_sups = sups[tail]
        if tail.size < 4 or np.any(np.diff(tail_sups) < 0.0) or tail_sups[-1] <= tail_sups[0]:
            raise EstimationError("sup|II| is not increasing on the trajectory tail")
        t_hat, sigma, _ = _fit_root(times[tail], tail_sups)
        # выпуклый хвост (тип II) уводит корень назад; сужаем окно к концу
        while t_hat <= times[-1]:
            if tail.size < 8:
                raise EstimationError(f"fitted T={t_hat:.17g} is not after the last snapshot")
            tail = tail[tail.size // 2:]
            t_hat, sigma, _ = _fit_root(times[tail], sups[tail])
        refined = _log_tail(times, t_hat, settings.tail_fraction)
        if refined.size < settings.min_snapshots:
            refined = np.arange(count - settings.min_snapshots, count)
        if np.array_equal(refined, tail):
            break
        tail = refined
    logger.info("Singular time estimate: T=%.17g sigma=%.3e (%d tail snapshots)", t_hat, sigma, tail.size)
    return t_hat, sigma


def _argmax_diameter(traj: FlowTrajectory, indices: Sequence[int]) -> Tuple[float, float]:
    last = traj.snapshots[-1].immersion
    vertices = sorted({traj.snapshots[i].argmax for i in indices})
    if isinstance(last, DiscreteCurve):
        scale = last.length
    else:
        scale = last.generating_curve().length
    diameter = 0.0
    for v in vertices:
        d = last.distances_from(v)[vertices]
        diameter = max(diameter, float(np.max(d)))
    return diameter, scale


def classify_singularity(
    traj: FlowTrajectory,
    t_hat: Optional[float],
    sigma: float = 0.0,
    settings: Optional[ClassifySettings] = None,
) -> SingularityClass:
    """Тип I/II по s(t) = sup|II|^2 (T - t) на хвосте, плюс флаг compact type."""
    settings = settings or ClassifySettings()
    if t_hat is None:
        return SingularityClass(kind="NoSingularityDetected", note="no singular time estimate")
    times, sups = traj.times, traj.sups
    guard = settings.sigma_guard * (sigma or 0.0)
    eligible = np.flatnonzero(t_hat - times > guard)
    if eligible.size < settings.min_snapshots:
        return SingularityClass(kind="Indeterminate", t_hat=t_hat, sigma=sigma,
                                note="too few snapshots resolved by the fit")
    tail = eligible[_log_tail(times[eligible], t_hat, settings.tail_fraction)]
    if tail.size < 3:
        tail = eligible[-3:]
    gaps = t_hat - times[tail]
    s = sups[tail] ** 2 * gaps
    s_min, s_max = float(s.min()), float(s.max())
    trend = float(np.polyfit(-np.log(gaps), s, 1)[0])

    # рост s выше порога проверяется раньше полосы
    if s_max > settings.growth_threshold and trend > 0:
        kind = "TypeII"
    elif s_max / s_min <= settings.band_ratio:
        kind = "TypeI"
    else:
        kind = "Indeterminate"

    late = tail[len(tail) // 2:]
    diameter, scale = _argmax_diameter(traj, late)
    result = SingularityClass(
        kind=kind,
        t_hat=float(t_hat),
        sigma=float(sigma),
        type_one_constant=float(np.median(s)),
        s_min=s_min,
        s_max=s_max,
        trend=trend,
        floor_ok=bool(s_min >= settings.c_floor),
        compact_type=bool(diameter <= settings.compact_tol * scale),
        central_history=[int(traj.snapshots[i].argmax) for i in tail],
        tail_indices=[int(i) for i in tail],
    )
    if not result.floor_ok:
        logger.warning("Blow-up floor violated: min s(t)=%.3e < %.3e", s_min, settings.c_floor)
    if kind == "Indeterminate":
        logger.warning("Indeterminate singularity: s in [%.4g, %.4g], trend %.3g", s_min, s_max, trend)
    logger.info("Singularity: %s, s in [%.6g, %.6g], compact_type=%s", kind, s_min, s_max, result.compact_type)
    return result


def analyze(traj: FlowTrajectory, settings: Optional[ClassifySettings] = None) -> SingularityClass:
    """estimate_singular_time + classify_singularity, результат сохраняется в traj."""
    try:
        t_hat, sigma = estimate_singular_time(traj, settings)
    except EstimationError as exc:
        logger.info("No singular time: %s", exc)
        traj.singularity = SingularityClass(kind="NoSingularityDetected", note=str(exc))
        return traj.singularity
    traj.t_hat, traj.sigma = t_hat, sigma
    traj.singularity = classify_singularity(traj, t_hat, sigma, settings)
    return traj.singularity


def s_of_t(traj: FlowTrajectory) -> np.ndarray:
    """sup|II|^2 (T - t) по всем снимкам; NaN без оценки T или при t >= T."""
    if traj.t_hat is None:
        return np.full(len(traj), np.nan)
    gaps = traj.t_hat - traj.times
    return np.where(gaps > 0, traj.sups**2 * gaps, np.nan)
