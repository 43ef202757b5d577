"""Начальные погружения для сценариев ScenarioConfig.scenario."""

import logging
import math
from typing import Any, Dict, Mapping

import numpy as np

from config import LAB_CONFIG
from services.immersion import AxisymProfile, DiscreteCurve, DiscreteImmersion, unit_circle

logger = logging.getLogger(__name__)

SCENARIOS = (
    "circle",
    "sphere_profile",
    "cylinder_profile",
    "dumbbell",
    "limacon",
    "ellipse",
    "from_file",
)


def ellipse(count: int, axes=(2.0, 1.0), center=(0.0, 0.0)) -> DiscreteCurve:
    theta = 2.0 * math.pi * np.arange(count) / count
    a, b = axes
    points = np.stack([a * np.cos(theta), b * np.sin(theta)], axis=1) + np.asarray(center, float)
    return DiscreteCurve(points)


def limacon(count: int, loop: float = 0.2, center=(0.0, 0.0)) -> DiscreteCurve:
    """r = b + cos(theta), b = 1 - loop; при 0 < loop < 1 есть внутренняя петля.

    Параметризация равномерна по theta, так что на петлю приходится заметная доля вершин.
    """
    b = 1.0 - loop
    theta = 2.0 * math.pi * np.arange(count) / count
    r = b + np.cos(theta)
    points = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1) + np.asarray(center, float)
    return DiscreteCurve(points)


def sphere_profile(count: int, radius: float = 1.0, m: int = 2) -> AxisymProfile:
    theta = np.linspace(0.0, math.pi, count)
    return AxisymProfile(theta, np.full(count, float(radius)), m=m, chart="polar")


def cylinder_profile(count: int, radius: float = 1.0, m: int = 2, half_length: float = 2.0) -> AxisymProfile:
    x = -half_length + 2.0 * half_length * np.arange(count) / count
    return AxisymProfile(x, np.full(count, float(radius)), m=m, chart="graph", boundary="periodic")


def dumbbell(
    count: int,
    bulb: float = 1.0,
    neck: float = 0.3,
    neck_half_width: float = 0.8,
    half_length: float = 2.0,
    m: int = 2,
) -> AxisymProfile:
    """Две «луковицы» радиуса bulb с плоской шейкой neck в x = 0 (узел сетки при нечётном count)."""
    x = np.linspace(-half_length, half_length, count)
    u = bulb - (bulb - neck) * np.exp(-((x / neck_half_width) ** 4))
    return AxisymProfile(x, u, m=m, chart="graph", boundary="neumann")


def build_initial(scenario: str, geometry: Mapping[str, Any], count: int) -> DiscreteImmersion:
    """Начальное погружение по имени сценария и секции GEOMETRY."""
    geo: Dict[str, Any] = {**LAB_CONFIG["GEOMETRY"], **dict(geometry)}
    center = tuple(geo["CENTER"])
    if scenario == "circle":
        return unit_circle(count, radius=geo["RADIUS"], center=center)
    if scenario == "ellipse":
        return ellipse(count, axes=tuple(geo["ELLIPSE_AXES"]), center=center)
    if scenario == "limacon":
        return limacon(count, loop=geo["LIMACON_LOOP"], center=center)
    if scenario == "sphere_profile":
        return sphere_profile(count, radius=geo["RADIUS"], m=geo["DIM_M"])
    if scenario == "cylinder_profile":
        return cylinder_profile(
            count, radius=geo["RADIUS"], m=geo["DIM_M"], half_length=geo["DUMBBELL_HALF_LENGTH"]
        )
    if scenario == "dumbbell":
        return dumbbell(
            count,
            bulb=geo["DUMBBELL_BULB"],
            neck=geo["DUMBBELL_NECK"],
            neck_half_width=geo["DUMBBELL_NECK_HALF_WIDTH"],
            half_length=geo["DUMBBELL_HALF_LENGTH"],
            m=geo["DIM_M"],
        )
    if scenario == "from_file":
        from services.store import read_snapshot_csv

        if not geo.get("FROM_FILE"):
            raise ValueError("scenario from_file needs GEOMETRY.FROM_FILE")
        imm = read_snapshot_csv(geo["FROM_FILE"], m=geo["DIM_M"])
        logger.info("Loaded initial immersion from %s (%d nodes)", geo["FROM_FILE"], imm.size)
        return imm
    raise ValueError(f"unknown scenario {scenario!r}")
