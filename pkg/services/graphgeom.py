"""Геометрия графиков f: D_r^m -> R^n над плоским диском.

Метрики g_ij, g_ab, вторая фундаментальная форма, символы Кристоффеля,
|nabla II|_g и численная проверка оценок на D^2 f и D^3 f.
Все нормы берутся только во внутренних узлах (кольцо ширины RING отброшено).
"""

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Dict, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

RING = 2
MIN_NODES = 5

# central stencils, offsets -half..half
_STENCILS = {
    1: np.array([-0.5, 0.0, 0.5]),
    2: np.array([1.0, -2.0, 1.0]),
    3: np.array([-0.5, 1.0, 0.0, -1.0, 0.5]),
}


class StencilError(ValueError):
    """Сетка слишком мала для разностных шаблонов или содержит NaN/Inf."""


class SingularMetricError(ValueError):
    """Индуцированная метрика вырождена: вход повреждён."""


def _axis_derivative(values: np.ndarray, axis: int, order: int, h: float) -> np.ndarray:
    if order == 0:
        return values
    coeffs = _STENCILS[order]
    half = len(coeffs) // 2
    out = np.zeros_like(values)
    for offset, coeff in zip(range(-half, half + 1), coeffs):
        if coeff:
            out += coeff * np.roll(values, -offset, axis=axis)
    return out / h**order


@dataclass(frozen=True, eq=False)
class GraphPatch:
    """Sampled graph f over the cube [-r, r]^m (which contains D_r^m).

    values has shape (N,)*m + (n,); node k on every axis sits at -r + k*h.
    """

    m: int
    n: int
    radius: float
    values: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != self.m + 1 or values.shape[-1] != self.n:
            raise StencilError(
                f"values shape {values.shape} does not match m={self.m}, n={self.n}"
            )
        nodes = values.shape[0]
        if any(size != nodes for size in values.shape[:-1]):
            raise StencilError("grid must have the same node count on every axis")
        if nodes < MIN_NODES:
            raise StencilError(
                f"{nodes} nodes per axis, third-derivative stencils need at least {MIN_NODES}"
            )
        if not self.radius > 0:
            raise StencilError("patch radius must be positive")
        if not np.all(np.isfinite(values)):
            raise StencilError("patch values contain NaN or Inf")

    @classmethod
    def sample(
        cls,
        func: Callable[[np.ndarray], np.ndarray],
        m: int,
        n: int,
        radius: float,
        nodes: int,
        label: str = "",
    ) -> "GraphPatch":
        """Сэмплирует func на равномерной сетке; func получает массив (..., m)."""
        axis = np.linspace(-radius, radius, nodes)
        grids = np.meshgrid(*([axis] * m), indexing="ij")
        coords = np.stack(grids, axis=-1)
        values = np.asarray(func(coords), dtype=float).reshape((nodes,) * m + (n,))
        return cls(m=m, n=n, radius=radius, values=values, label=label)

    @property
    def nodes(self) -> int:
        return self.values.shape[0]

    @property
    def spacing(self) -> float:
        return 2.0 * self.radius / (self.nodes - 1)

    def _crop(self, array: np.ndarray) -> np.ndarray:
        inner = array[(slice(RING, -RING),) * self.m]
        return inner.reshape((-1,) + array.shape[self.m:])

    @cached_property
    def interior_coords(self) -> np.ndarray:
        axis = np.linspace(-self.radius, self.radius, self.nodes)
        grids = np.meshgrid(*([axis] * self.m), indexing="ij")
        return self._crop(np.stack(grids, axis=-1))

    def _partial(self, counts: Tuple[int, ...], cache: Dict[Tuple[int, ...], np.ndarray]) -> np.ndarray:
        if counts not in cache:
            out = self.values
            for axis, order in enumerate(counts):
                out = _axis_derivative(out, axis, order, self.spacing)
            cache[counts] = self._crop(out)
        return cache[counts]

    @cached_property
    def jet(self) -> Dict[str, np.ndarray]:
        """Df (P,n,m), D2f (P,n,m,m), D3f (P,n,m,m,m) во внутренних узлах."""
        m = self.m
        cache: Dict[Tuple[int, ...], np.ndarray] = {}
        points = self.interior_coords.shape[0]

        def counts_of(indices: Tuple[int, ...]) -> Tuple[int, ...]:
            return tuple(indices.count(axis) for axis in range(m))

        df = np.empty((points, self.n, m))
        for i in range(m):
            df[:, :, i] = self._partial(counts_of((i,)), cache)
        d2f = np.empty((points, self.n, m, m))
        for i, j in itertools.product(range(m), repeat=2):
            d2f[:, :, i, j] = self._partial(counts_of((i, j)), cache)
        d3f = np.empty((points, self.n, m, m, m))
        for i, j, k in itertools.product(range(m), repeat=3):
            d3f[:, :, i, j, k] = self._partial(counts_of((i, j, k)), cache)
        for name, array in (("Df", df), ("D2f", d2f), ("D3f", d3f)):
            if not np.all(np.isfinite(array)):
                raise StencilError(f"non-finite {name} on patch {self.label!r}")
        return {"df": df, "d2f": d2f, "d3f": d3f}


@dataclass
class MetricData:
    g: np.ndarray
    g_normal: np.ndarray
    g_inv: np.ndarray
    g_normal_inv: np.ndarray
    mu_range: np.ndarray
    lambda_range: np.ndarray
    df_norm2: np.ndarray

    def sandwich_violation(self) -> np.ndarray:
        """Наибольший выход собственных значений из [1, 1+|Df|^2] по узлам."""
        upper = 1.0 + self.df_norm2
        below = np.maximum(1.0 - self.mu_range[:, 0], 1.0 - self.lambda_range[:, 0])
        above = np.maximum(self.mu_range[:, 1] - upper, self.lambda_range[:, 1] - upper)
        return np.maximum(below, above)


@dataclass
class SffData:
    h: np.ndarray
    ii_norm2: np.ndarray
    gamma_tangent: Optional[np.ndarray] = None
    gamma_normal: Optional[np.ndarray] = None
    nabla_ii_norm2: Optional[np.ndarray] = None


@dataclass
class BoundReport:
    name: str
    passed: bool
    worst_slack: float
    worst_node: Tuple[float, ...]
    slack: np.ndarray = field(repr=False)
    tolerance: float = 0.0

    @property
    def stats(self) -> Dict[str, float]:
        return {
            "nodes": int(self.slack.size),
            "min": float(np.min(self.slack)),
            "max": float(np.max(self.slack)),
            "mean": float(np.mean(self.slack)),
        }

    def to_dict(self) -> Dict[str, object]:
        return {
            "pass": bool(self.passed),
            "worst_slack": float(self.worst_slack),
            "worst_node": [float(x) for x in self.worst_node],
            "stats": self.stats,
        }


def induced_metric(patch: GraphPatch) -> MetricData:
    """g_ij = delta_ij + D_i f . D_j f и g_ab = delta_ab + Df_a . Df_b."""
    df = patch.jet["df"]
    g = np.eye(patch.m) + np.einsum("pai,paj->pij", df, df)
    g_normal = np.eye(patch.n) + np.einsum("pai,pbi->pab", df, df)
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(g_normal))):
        raise SingularMetricError(f"non-finite metric on patch {patch.label!r}")
    mu = np.linalg.eigvalsh(g)
    lam = np.linalg.eigvalsh(g_normal)
    if mu[:, 0].min() <= 0.0 or lam[:, 0].min() <= 0.0:
        raise SingularMetricError(f"metric is not positive definite on patch {patch.label!r}")
    return MetricData(
        g=g,
        g_normal=g_normal,
        g_inv=np.linalg.inv(g),
        g_normal_inv=np.linalg.inv(g_normal),
        mu_range=np.stack([mu[:, 0], mu[:, -1]], axis=1),
        lambda_range=np.stack([lam[:, 0], lam[:, -1]], axis=1),
        df_norm2=np.einsum("pai,pai->p", df, df),
    )


def second_fundamental_form(patch: GraphPatch, metric: Optional[MetricData] = None) -> SffData:
    metric = metric or induced_metric(patch)
    h = patch.jet["d2f"]
    ii_norm2 = np.einsum(
        "paij,pbkl,pab,pik,pjl->p", h, h, metric.g_normal_inv, metric.g_inv, metric.g_inv,
        optimize=True,
    )
    return SffData(h=h, ii_norm2=ii_norm2)


def christoffel_and_nabla_sff(
    patch: GraphPatch,
    metric: Optional[MetricData] = None,
    sff: Optional[SffData] = None,
) -> SffData:
    """Gamma_ij^k, Gamma_ia^b и |nabla II|_g^2 во внутренних узлах."""
    if patch.nodes < MIN_NODES:
        raise StencilError(f"{patch.nodes} nodes per axis, need {MIN_NODES} for D^3 f")
    metric = metric or induced_metric(patch)
    sff = sff or second_fundamental_form(patch, metric)
    h, df, d3f = sff.h, patch.jet["df"], patch.jet["d3f"]

    # Gamma_ij^k = g^{kl} (D2_ij f . D_l f)
    gamma_t = np.einsum("pkl,pbij,pbl->pijk", metric.g_inv, h, df, optimize=True)
    # Gamma_ia^b = g^{bc} (D2_i. f_a . Df_c)
    gamma_n = np.einsum("pbc,pair,pcr->piab", metric.g_normal_inv, h, df, optimize=True)

    tensor = (
        d3f
        + np.einsum("palk,pijl->paijk", h, gamma_t, optimize=True)
        + np.einsum("pajl,pikl->paijk", h, gamma_t, optimize=True)
        + np.einsum("pbjk,piab->paijk", h, gamma_n, optimize=True)
    )
    g_inv, gn_inv = metric.g_inv, metric.g_normal_inv
    nabla = np.einsum(
        "paijk,pbqrs,pab,piq,pjr,pks->p", tensor, tensor, gn_inv, g_inv, g_inv, g_inv,
        optimize=True,
    )
    return replace(sff, gamma_tangent=gamma_t, gamma_normal=gamma_n, nabla_ii_norm2=nabla)


def _report(name: str, patch: GraphPatch, slack: np.ndarray, tolerance: float) -> BoundReport:
    worst = int(np.argmin(slack))
    return BoundReport(
        name=name,
        passed=bool(slack[worst] >= -tolerance),
        worst_slack=float(slack[worst]),
        worst_node=tuple(float(x) for x in patch.interior_coords[worst]),
        slack=slack,
        tolerance=tolerance,
    )


def check_hessian_bound(patch: GraphPatch, tolerance: float = 1e-8) -> BoundReport:
    """|D^2 f|^2 <= (1+|Df|^2)^3 |II|_g^2 в каждом внутреннем узле."""
    metric = induced_metric(patch)
    sff = second_fundamental_form(patch, metric)
    lhs = np.einsum("paij,paij->p", sff.h, sff.h)
    rhs = (1.0 + metric.df_norm2) ** 3 * sff.ii_norm2
    return _report("hessian_bound", patch, rhs - lhs, tolerance)


def third_derivative_constant(m: int, n: int) -> float:
    return 2.0 * math.sqrt(2 * m + 4 * math.sqrt(m * n) + n)


def check_third_derivative_bound(patch: GraphPatch, tolerance: float = 1e-6) -> BoundReport:
    """|D^3 f| <= (1+|Df|^2)^2 |nabla II|_g + c(m,n) |D^2 f|^2 |Df|."""
    metric = induced_metric(patch)
    sff = christoffel_and_nabla_sff(patch, metric)
    d3f = patch.jet["d3f"]
    lhs = np.sqrt(np.einsum("paijk,paijk->p", d3f, d3f))
    hess2 = np.einsum("paij,paij->p", sff.h, sff.h)
    rhs = (1.0 + metric.df_norm2) ** 2 * np.sqrt(np.maximum(sff.nabla_ii_norm2, 0.0))
    rhs = rhs + third_derivative_constant(patch.m, patch.n) * hess2 * np.sqrt(metric.df_norm2)
    return _report("third_derivative_bound", patch, rhs - lhs, tolerance)


def check_eigen_sandwich(patch: GraphPatch, tolerance: float = 1e-10) -> BoundReport:
    metric = induced_metric(patch)
    return _report("eigen_sandwich", patch, -metric.sandwich_violation(), tolerance)


def curve_identity_residual(patch: GraphPatch) -> float:
    """Для m = n = 1: max относительное отклонение |D^2 f|^2 от (1+|Df|^2)^3 |II|_g^2."""
    if patch.m != 1 or patch.n != 1:
        raise ValueError("the identity holds only for m = n = 1")
    metric = induced_metric(patch)
    sff = second_fundamental_form(patch, metric)
    lhs = np.einsum("paij,paij->p", sff.h, sff.h)
    rhs = (1.0 + metric.df_norm2) ** 3 * sff.ii_norm2
    scale = np.maximum(np.abs(lhs), 1e-300)
    rel = np.where(np.abs(lhs) > 0, np.abs(rhs - lhs) / scale, np.abs(rhs))
    return float(np.max(rel))
