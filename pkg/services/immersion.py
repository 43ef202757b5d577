"""Дискретные погружения, которые реально текут.

DiscreteCurve: замкнутая (или открытая) ломаная в R^2.
AxisymProfile: профиль гиперповерхности вращения в R^{m+1}, либо график u(x),
либо полярный радиус rho(theta) с отражающими полюсами.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Union

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.interpolate import CubicSpline

logger = logging.getLogger(__name__)

MIN_CLOSED_VERTICES = 16
COLLINEAR_EPS = 1e-14
CHARTS = ("graph", "polar")
BOUNDARIES = ("periodic", "neumann")


class CurveError(ValueError):
    """Некорректная ломаная."""


class SingularProfileError(ValueError):
    """Профиль коснулся оси: u <= 0."""


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _unit(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=-1, keepdims=True)
    return vectors / np.where(norms > 0, norms, 1.0)


@dataclass(frozen=True, eq=False)
class DiscreteCurve:
    vertices: np.ndarray
    closed: bool = True

    def __post_init__(self) -> None:
        vertices = np.asarray(self.vertices, dtype=float)
        object.__setattr__(self, "vertices", vertices)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise CurveError("vertices must be an (N, 2) array")
        minimum = MIN_CLOSED_VERTICES if self.closed else 3
        if vertices.shape[0] < minimum:
            raise CurveError(f"need at least {minimum} vertices, got {vertices.shape[0]}")
        if not np.all(np.isfinite(vertices)):
            raise CurveError("vertices contain NaN or Inf")
        if np.any(self.edge_lengths == 0.0):
            raise CurveError("consecutive vertices must be distinct")

    @property
    def size(self) -> int:
        return self.vertices.shape[0]

    @property
    def positions(self) -> np.ndarray:
        return self.vertices

    def with_vertices(self, vertices: np.ndarray) -> "DiscreteCurve":
        return DiscreteCurve(vertices, closed=self.closed)

    def rescaled(self, scale: float, center=(0.0, 0.0)) -> "DiscreteCurve":
        return self.with_vertices(scale * (self.vertices - np.asarray(center, dtype=float)))

    @cached_property
    def edges(self) -> np.ndarray:
        if self.closed:
            return np.roll(self.vertices, -1, axis=0) - self.vertices
        return np.diff(self.vertices, axis=0)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.edges, axis=1)

    @cached_property
    def length(self) -> float:
        return float(np.sum(self.edge_lengths))

    @property
    def measure(self) -> float:
        return self.length

    @cached_property
    def arclength(self) -> np.ndarray:
        """Длина дуги от вершины 0 до каждой вершины."""
        return np.concatenate([[0.0], np.cumsum(self.edge_lengths)[: self.size - 1]])

    def _incoming_outgoing(self):
        v = self.vertices
        if self.closed:
            prev_v, next_v = np.roll(v, 1, axis=0), np.roll(v, -1, axis=0)
        else:
            prev_v = np.concatenate([v[:1] - (v[1:2] - v[:1]), v[:-1]])
            next_v = np.concatenate([v[1:], v[-1:] + (v[-1:] - v[-2:-1])])
        return v - prev_v, next_v - v

    @cached_property
    def tangents(self) -> np.ndarray:
        incoming, outgoing = self._incoming_outgoing()
        return _unit(_unit(incoming) + _unit(outgoing))

    @cached_property
    def normals(self) -> np.ndarray:
        t = self.tangents
        return np.stack([-t[:, 1], t[:, 0]], axis=1)

    @cached_property
    def curvature(self) -> np.ndarray:
        """Знаковая кривизна Менгера по тройкам вершин; вырожденные тройки дают 0."""
        a, b = self._incoming_outgoing()
        c = a + b
        la, lb, lc = (np.linalg.norm(x, axis=1) for x in (a, b, c))
        cross = _cross(a, b)
        denom = la * lb * lc
        degenerate = (np.abs(cross) <= COLLINEAR_EPS * la * lb) | (denom == 0.0)
        k = np.where(degenerate, 0.0, 2.0 * cross / np.where(denom > 0, denom, 1.0))
        if not self.closed:
            k[0], k[-1] = k[1], k[-2]
        return k

    @property
    def mean_curvature_vector(self) -> np.ndarray:
        return self.curvature[:, None] * self.normals

    @property
    def normal_curvature(self) -> np.ndarray:
        """H . nu в терминах единичной нормали normals."""
        return self.curvature

    @property
    def ii_norm(self) -> np.ndarray:
        return np.abs(self.curvature)

    @property
    def sup_ii(self) -> float:
        return float(np.max(self.ii_norm))

    @cached_property
    def segment_weights(self) -> np.ndarray:
        """Вес вершины для квадратуры: половина длин соседних рёбер."""
        lengths = self.edge_lengths
        if self.closed:
            return 0.5 * (lengths + np.roll(lengths, 1))
        weights = np.zeros(self.size)
        weights[:-1] += 0.5 * lengths
        weights[1:] += 0.5 * lengths
        return weights

    @cached_property
    def turning_number(self) -> int:
        if not self.closed:
            raise CurveError("turning number is defined for closed curves only")
        incoming, outgoing = self._incoming_outgoing()
        angles = np.arctan2(_cross(incoming, outgoing), np.einsum("ij,ij->i", incoming, outgoing))
        return int(round(float(np.sum(angles)) / (2.0 * math.pi)))

    def distances_from(self, i: int) -> np.ndarray:
        """Индуцированное расстояние от вершины i до всех вершин (по короткой дуге)."""
        d = np.abs(self.arclength - self.arclength[i])
        if self.closed:
            d = np.minimum(d, self.length - d)
        return d


def curvature(curve: DiscreteCurve):
    """Per-vertex (k, nu, H)."""
    return curve.curvature, curve.normals, curve.mean_curvature_vector


def _resample_positions(curve: DiscreteCurve, targets: np.ndarray) -> np.ndarray:
    s = np.concatenate([curve.arclength, [curve.length]]) if curve.closed else curve.arclength
    points = np.vstack([curve.vertices, curve.vertices[:1]]) if curve.closed else curve.vertices
    return np.stack([np.interp(targets, s, points[:, 0]), np.interp(targets, s, points[:, 1])], axis=1)


def resample_arclength(curve: DiscreteCurve, count: int, max_iter: int = 50) -> DiscreteCurve:
    """Равномерная по длине дуги перепараметризация; вершины остаются на исходной ломаной.

    Параметры новых вершин уточняются до равенства хорд, поэтому повторное
    применение ничего не меняет.
    """
    if curve.closed and count < MIN_CLOSED_VERTICES:
        raise CurveError(f"resampling needs at least {MIN_CLOSED_VERTICES} vertices")
    total = curve.length
    slots = count if curve.closed else count - 1
    targets = np.arange(count) * (total / slots)
    vertices = _resample_positions(curve, targets)
    for _ in range(max_iter):
        chords = np.linalg.norm(
            (np.roll(vertices, -1, axis=0) - vertices) if curve.closed else np.diff(vertices, axis=0),
            axis=1,
        )
        mean = float(np.mean(chords))
        if np.max(np.abs(chords - mean)) <= 1e-14 * max(mean, 1e-300):
            break
        cumulative = np.concatenate([[0.0], np.cumsum(chords)])
        param = np.concatenate([targets, [total]]) if curve.closed else targets
        targets = np.interp(np.arange(count) * (cumulative[-1] / slots), cumulative, param)
        vertices = _resample_positions(curve, targets)
    return curve.with_vertices(vertices)


def _equidistributed(grid: np.ndarray, density: np.ndarray, count: int, closed: bool) -> np.ndarray:
    """Параметры count узлов, делящих интеграл density по grid на равные доли; первый узел = grid[0]."""
    cumulative = cumulative_trapezoid(density, grid, initial=0.0)
    slots = count if closed else count - 1
    targets = np.arange(count) * (cumulative[-1] / slots)
    params = np.interp(targets, cumulative, grid)
    if not closed:
        params[-1] = grid[-1]
    return params


def _monitor(speed: np.ndarray, ii: np.ndarray, grid: np.ndarray, weight: float) -> np.ndarray:
    length = float(trapezoid(speed, grid))
    total = float(trapezoid(ii * speed, grid))
    if total <= 0.0:
        return speed / length
    return speed * ((1.0 - weight) / length + weight * ii / total)


def resample_curvature(curve: DiscreteCurve, count: int, weight: float = 0.8, oversample: int = 8) -> DiscreteCurve:
    """Перепараметризация замкнутой кривой с плотностью узлов (1 - weight)/L + weight |k|/K.

    Кривая приближается периодическим кубическим сплайном по хордовому параметру;
    вершина 0 остаётся на месте, так что симметричная петля сохраняет вершину на оси.
    """
    if not curve.closed:
        raise CurveError("curvature resampling is defined for closed curves only")
    if count < MIN_CLOSED_VERTICES:
        raise CurveError(f"resampling needs at least {MIN_CLOSED_VERTICES} vertices")
    knots = np.concatenate([curve.arclength, [curve.length]])
    spline = CubicSpline(knots, np.vstack([curve.vertices, curve.vertices[:1]]), bc_type="periodic")
    grid = np.linspace(0.0, curve.length, oversample * count + 1)
    d1, d2 = spline(grid, 1), spline(grid, 2)
    speed = np.linalg.norm(d1, axis=1)
    k = np.abs(_cross(d1, d2)) / speed**3
    params = _equidistributed(grid, _monitor(speed, k, grid, weight), count, closed=True)
    return curve.with_vertices(spline(params))


def induced_distance(curve: DiscreteCurve, i: int, j: int) -> float:
    return float(curve.distances_from(i)[j])


def sphere_area(m: int) -> float:
    """|S^{m-1}|, площадь единичной сферы-слоя вращения."""
    return 2.0 * math.pi ** (m / 2.0) / math.gamma(m / 2.0)


@dataclass(frozen=True, eq=False)
class AxisymProfile:
    """Профиль u > 0 (chart="graph", сетка по x) или rho > 0 (chart="polar", сетка по theta)."""

    coords: np.ndarray
    values: np.ndarray
    m: int = 2
    chart: str = "graph"
    boundary: str = "neumann"
    axial_shift: float = 0.0

    def __post_init__(self) -> None:
        coords = np.asarray(self.coords, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "values", values)
        if self.chart not in CHARTS:
            raise ValueError(f"unknown chart {self.chart!r}")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.chart == "polar" and self.boundary != "neumann":
            raise ValueError("polar profiles have reflecting poles (boundary='neumann')")
        if coords.ndim != 1 or coords.shape != values.shape or coords.size < 5:
            raise ValueError("coords and values must be 1-D arrays of equal length >= 5")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        steps = np.diff(coords)
        if np.any(steps <= 0):
            raise ValueError("profile grid must be increasing")
        uniform = bool(np.allclose(steps, steps[0], rtol=1e-9, atol=0.0))
        if not uniform and not (self.chart == "graph" and self.boundary == "neumann"):
            raise ValueError("only neumann graph profiles may use a nonuniform grid")
        object.__setattr__(self, "uniform", uniform)
        if not np.all(np.isfinite(values)):
            raise SingularProfileError("profile values contain NaN or Inf")
        if np.any(values <= 0.0):
            raise SingularProfileError(f"profile touches the axis: min value {values.min():.3e}")

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def spacing(self) -> float:
        """Шаг равномерной сетки."""
        if not self.uniform:
            raise ValueError("nonuniform grid has no single spacing; use steps")
        return float(self.coords[1] - self.coords[0])

    @cached_property
    def steps(self):
        """(h_-, h_+) по узлам; на краях neumann шаг отражается."""
        if self.uniform:
            h = np.full(self.size, self.spacing)
            return h, h
        d = np.diff(self.coords)
        return np.concatenate([d[:1], d]), np.concatenate([d, d[-1:]])

    def with_values(self, values: np.ndarray) -> "AxisymProfile":
        return self.with_grid(self.coords, values)

    def with_grid(self, coords: np.ndarray, values: np.ndarray) -> "AxisymProfile":
        return AxisymProfile(
            coords, values, m=self.m, chart=self.chart, boundary=self.boundary,
            axial_shift=self.axial_shift,
        )

    def rescaled(self, scale: float, axial_center: float = 0.0) -> "AxisymProfile":
        """Образ при x -> scale * (x - axial_center) вдоль оси."""
        coords = self.coords * scale if self.chart == "graph" else self.coords
        return AxisymProfile(
            coords, self.values * scale, m=self.m, chart=self.chart, boundary=self.boundary,
            axial_shift=scale * (self.axial_shift - axial_center),
        )

    def padded(self, values: np.ndarray) -> np.ndarray:
        """Значения с фиктивными узлами по краям согласно граничному условию."""
        if self.boundary == "periodic":
            return np.concatenate([values[-1:], values, values[:1]])
        return np.concatenate([values[1:2], values, values[-2:-1]])

    @cached_property
    def derivatives(self):
        p = self.padded(self.values)
        if self.uniform:
            h = self.spacing
            first = (p[2:] - p[:-2]) / (2 * h)
            second = (p[2:] - 2 * p[1:-1] + p[:-2]) / h**2
            return first, second
        # трёхточечные формулы второго порядка на неравномерной сетке
        hm, hp = self.steps
        um, u0, up = p[:-2], p[1:-1], p[2:]
        total = hm + hp
        first = (hm**2 * (up - u0) + hp**2 * (u0 - um)) / (hm * hp * total)
        second = 2.0 * (hm * up - total * u0 + hp * um) / (hm * hp * total)
        return first, second

    @cached_property
    def principal_curvatures(self):
        """(kappa_profile, kappa_axis) по узлам."""
        d1, d2 = self.derivatives
        if self.chart == "graph":
            u = self.values
            slope = 1.0 + d1**2
            return d2 / slope**1.5, 1.0 / (u * np.sqrt(slope))
        rho, theta = self.values, self.coords
        speed2 = rho**2 + d1**2
        k = (rho**2 + 2 * d1**2 - rho * d2) / speed2**1.5
        with np.errstate(divide="ignore", invalid="ignore"):
            cot_term = np.where(np.abs(np.sin(theta)) > 1e-12, d1 / (rho * np.tan(theta)), 0.0)
        k_rot = (1.0 - cot_term) / np.sqrt(speed2)
        poles = np.abs(np.sin(theta)) <= 1e-12
        k_rot = np.where(poles, k, k_rot)
        return k, k_rot

    @cached_property
    def ii_norm2(self) -> np.ndarray:
        kp, ka = self.principal_curvatures
        return kp**2 + (self.m - 1) * ka**2

    @property
    def ii_norm(self) -> np.ndarray:
        return np.sqrt(self.ii_norm2)

    @property
    def sup_ii(self) -> float:
        return float(np.max(self.ii_norm))

    @cached_property
    def normal_curvature(self) -> np.ndarray:
        """H . N для внешней нормали N в меридиональной плоскости."""
        kp, ka = self.principal_curvatures
        if self.chart == "graph":
            return kp - (self.m - 1) * ka
        return -(kp + (self.m - 1) * ka)

    @cached_property
    def positions(self) -> np.ndarray:
        """Точки образующей в полуплоскости (x, u)."""
        if self.chart == "graph":
            return np.stack([self.coords + self.axial_shift, self.values], axis=1)
        return np.stack(
            [self.values * np.cos(self.coords) + self.axial_shift, self.values * np.sin(self.coords)],
            axis=1,
        )

    @cached_property
    def outward_normals(self) -> np.ndarray:
        d1, _ = self.derivatives
        if self.chart == "graph":
            normals = np.stack([-d1, np.ones_like(d1)], axis=1)
        else:
            rho, theta = self.values, self.coords
            normals = np.stack(
                [rho * np.cos(theta) + d1 * np.sin(theta), rho * np.sin(theta) - d1 * np.cos(theta)],
                axis=1,
            )
        return _unit(normals)

    @cached_property
    def radii(self) -> np.ndarray:
        """Расстояние до оси вращения."""
        return self.positions[:, 1]

    @cached_property
    def speed(self) -> np.ndarray:
        d1, _ = self.derivatives
        if self.chart == "graph":
            return np.sqrt(1.0 + d1**2)
        return np.sqrt(self.values**2 + d1**2)

    @cached_property
    def segment_weights(self) -> np.ndarray:
        """Веса трапеций по параметру, умноженные на |X'|."""
        if self.uniform:
            h = self.spacing
            weights = np.full(self.size, h)
            if self.boundary != "periodic":
                weights[0] = weights[-1] = 0.5 * h
            return weights * self.speed
        d = np.diff(self.coords)
        weights = np.zeros(self.size)
        weights[:-1] += 0.5 * d
        weights[1:] += 0.5 * d
        return weights * self.speed

    @cached_property
    def measure(self) -> float:
        """Площадь представленного куска гиперповерхности."""
        density = sphere_area(self.m) * self.radii ** (self.m - 1)
        return float(np.sum(density * self.segment_weights))

    def generating_curve(self) -> DiscreteCurve:
        return DiscreteCurve(self.positions, closed=False)

    def distances_from(self, i: int) -> np.ndarray:
        return self.generating_curve().distances_from(i)


def regrid_profile(profile: AxisymProfile, weight: float = 0.8, oversample: int = 8) -> AxisymProfile:
    """Новая сетка по x для neumann-графика: узлы гуще там, где больше |II| на образующей.

    u продолжается сплайном с нулевыми наклонами на краях; концы отрезка не двигаются.
    """
    if profile.chart != "graph" or profile.boundary != "neumann":
        raise ValueError("regridding is defined for neumann graph profiles only")
    x = profile.coords
    spline = CubicSpline(x, profile.values, bc_type="clamped")
    grid = np.linspace(x[0], x[-1], oversample * (profile.size - 1) + 1)
    u, d1, d2 = spline(grid), spline(grid, 1), spline(grid, 2)
    if np.any(u <= 0.0):
        raise SingularProfileError("interpolated profile touches the axis")
    slope = 1.0 + d1**2
    ii = np.sqrt((d2 / slope**1.5) ** 2 + (profile.m - 1) / (u**2 * slope))
    speed = np.sqrt(slope)
    coords = _equidistributed(grid, _monitor(speed, ii, grid, weight), profile.size, closed=False)
    return profile.with_grid(coords, spline(coords))


DiscreteImmersion = Union[DiscreteCurve, AxisymProfile]


def axisym_sff(profile: AxisymProfile) -> np.ndarray:
    """|II|^2 по узлам: kappa_profile^2 + (m-1) kappa_axis^2."""
    if np.any(profile.values <= 0.0):
        raise SingularProfileError("profile touches the axis")
    return profile.ii_norm2


def unit_circle(count: int, radius: float = 1.0, center=(0.0, 0.0), phase: float = 0.0) -> DiscreteCurve:
    theta = phase + 2.0 * math.pi * np.arange(count) / count
    points = np.stack([np.cos(theta), np.sin(theta)], axis=1) * radius + np.asarray(center, float)
    return DiscreteCurve(points)
