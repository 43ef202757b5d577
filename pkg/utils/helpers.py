import copy
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional

from config import LAB_CONFIG
from services.blowup import CENTERINGS
from services.mcflow import RESAMPLE_MODES, ClassifySettings, FlowSettings
from services.scenarios import SCENARIOS, build_initial

logger = logging.getLogger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


class ConfigError(ValueError):
    """Все ошибки конфигурации разом."""

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.errors))


def deep_merge(base: Dict[str, Any], override: Mapping[str, Any], errors: List[str], prefix: str = "") -> Dict[str, Any]:
    """Рекурсивно накладывает override на base; неизвестные ключи попадают в errors."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        name = f"{prefix}{key}"
        if key not in base:
            errors.append(f"unknown key {name}")
            continue
        if isinstance(base[key], dict) and key != "PATCH_NODES":
            if not isinstance(value, Mapping):
                errors.append(f"{name} must be a section (object)")
                continue
            merged[key] = deep_merge(base[key], value, errors, prefix=f"{name}.")
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def apply_env_overrides(raw: Dict[str, Any], env: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    """CURVLAB_* переменные окружения (и .env) поверх файла конфигурации."""
    env = os.environ if env is None else env
    out_dir_env = env.get("CURVLAB_OUT_DIR")
    if out_dir_env:
        raw["OUTPUT"]["OUT_DIR"] = out_dir_env.strip()
    log_level_env = env.get("CURVLAB_LOG_LEVEL")
    if log_level_env:
        raw["LOG_LEVEL"] = log_level_env.strip().upper()
    n_env = env.get("CURVLAB_N")
    if n_env:
        try:
            raw["DISCRETIZATION"]["N"] = int(n_env)
        except ValueError:
            logger.warning("Ignoring CURVLAB_N=%r: not an integer", n_env)
    c_cfl_env = env.get("CURVLAB_C_CFL")
    if c_cfl_env:
        try:
            raw["DISCRETIZATION"]["C_CFL"] = float(c_cfl_env)
        except ValueError:
            logger.warning("Ignoring CURVLAB_C_CFL=%r: not a number", c_cfl_env)
    cap_env = env.get("CURVLAB_CURVATURE_CAP")
    if cap_env:
        try:
            raw["CAPS"]["CURVATURE_CAP"] = float(cap_env)
        except ValueError:
            logger.warning("Ignoring CURVLAB_CURVATURE_CAP=%r: not a number", cap_env)
    seed_env = env.get("CURVLAB_SEED")
    if seed_env:
        try:
            raw["OUTPUT"]["SEED"] = int(seed_env)
        except ValueError:
            logger.warning("Ignoring CURVLAB_SEED=%r: not an integer", seed_env)
    return raw


def _number(raw: Dict[str, Any], section: Optional[str], key: str, errors: List[str], integer: bool = False):
    value = raw[key] if section is None else raw[section][key]
    name = key if section is None else f"{section}.{key}"
    kinds = (int,) if integer else (int, float)
    if isinstance(value, bool) or not isinstance(value, kinds):
        errors.append(f"{name} must be {'an integer' if integer else 'a number'}, got {value!r}")
        return None
    return value


def validate(raw: Dict[str, Any]) -> List[str]:
    errors: List[str] = []

    def check(section, key, predicate, message, integer=False):
        value = _number(raw, section, key, errors, integer)
        if value is not None and not predicate(value):
            errors.append(f"{section}.{key} {message}, got {value!r}")

    if raw["SCENARIO"] not in SCENARIOS:
        errors.append(f"SCENARIO must be one of {', '.join(SCENARIOS)}, got {raw['SCENARIO']!r}")
    if str(raw["LOG_LEVEL"]).upper() not in LOG_LEVELS:
        errors.append(f"LOG_LEVEL must be one of {', '.join(LOG_LEVELS)}, got {raw['LOG_LEVEL']!r}")

    for key in ("RADIUS", "DUMBBELL_BULB", "DUMBBELL_NECK", "DUMBBELL_NECK_HALF_WIDTH", "DUMBBELL_HALF_LENGTH"):
        check("GEOMETRY", key, lambda v: v > 0, "must be > 0")
    check("GEOMETRY", "LIMACON_LOOP", lambda v: 0 < v < 1, "must lie in (0, 1)")
    check("GEOMETRY", "DIM_M", lambda v: v >= 1, "must be >= 1", integer=True)
    geo = raw["GEOMETRY"]
    axes = geo["ELLIPSE_AXES"]
    if not (isinstance(axes, list) and len(axes) == 2 and all(isinstance(a, (int, float)) and a > 0 for a in axes)):
        errors.append(f"GEOMETRY.ELLIPSE_AXES must be two lengths > 0, got {axes!r}")
    center = geo["CENTER"]
    if not (isinstance(center, list) and len(center) == 2 and all(isinstance(c, (int, float)) for c in center)):
        errors.append(f"GEOMETRY.CENTER must be a point [x, y], got {center!r}")
    bulb, neck = geo["DUMBBELL_BULB"], geo["DUMBBELL_NECK"]
    if isinstance(bulb, (int, float)) and isinstance(neck, (int, float)) and raw["SCENARIO"] == "dumbbell" and not neck < bulb:
        errors.append(f"GEOMETRY.DUMBBELL_NECK must be smaller than DUMBBELL_BULB ({neck!r} >= {bulb!r})")

    check("DISCRETIZATION", "N", lambda v: v >= 16, "must be >= 16", integer=True)
    check("DISCRETIZATION", "C_CFL", lambda v: 0 < v <= 1, "must lie in (0, 1]")
    check("DISCRETIZATION", "RESAMPLE_EVERY", lambda v: v >= 0, "must be >= 0", integer=True)
    check("DISCRETIZATION", "RESAMPLE_WEIGHT", lambda v: 0 <= v < 1, "must lie in [0, 1)")
    if raw["DISCRETIZATION"]["RESAMPLE_MODE"] not in RESAMPLE_MODES:
        errors.append(
            f"DISCRETIZATION.RESAMPLE_MODE must be one of {', '.join(RESAMPLE_MODES)}, "
            f"got {raw['DISCRETIZATION']['RESAMPLE_MODE']!r}"
        )
    check("DISCRETIZATION", "STEP_TOL", lambda v: v > 0, "must be > 0")
    check("DISCRETIZATION", "DT_MIN", lambda v: v > 0, "must be > 0")
    check("DISCRETIZATION", "SNAPSHOT_GROWTH", lambda v: v > 1, "must be > 1")
    check("DISCRETIZATION", "MAX_STEPS", lambda v: v >= 1, "must be >= 1", integer=True)
    check("CAPS", "CURVATURE_CAP", lambda v: v > 0, "must be > 0")
    check("CAPS", "T_MAX", lambda v: v > 0, "must be > 0")

    check("CLASSIFY", "TAIL_FRACTION", lambda v: 0 < v <= 1, "must lie in (0, 1]")
    check("CLASSIFY", "BAND_RATIO", lambda v: v > 1, "must be > 1")
    check("CLASSIFY", "MIN_SNAPSHOTS", lambda v: v >= 4, "must be >= 4", integer=True)

    check("BLOWUP", "J_COUNT", lambda v: v >= 3, "must be >= 3", integer=True)
    check("BLOWUP", "TTILDE_RATE", lambda v: 0 < v < 1, "must lie in (0, 1)")
    check("BLOWUP", "LIMIT_LEVELS", lambda v: v >= 1, "must be >= 1", integer=True)
    grid = raw["BLOWUP"]["S_GRID"]
    if not (isinstance(grid, list) and len(grid) >= 3 and all(isinstance(s, (int, float)) for s in grid)):
        errors.append(f"BLOWUP.S_GRID must list at least 3 rescaled times, got {grid!r}")
    if raw["BLOWUP"]["CENTERING"] not in CENTERINGS:
        errors.append(f"BLOWUP.CENTERING must be one of {', '.join(CENTERINGS)}, got {raw['BLOWUP']['CENTERING']!r}")
    check("VERIFY", "PATCH_COUNT", lambda v: v >= 1, "must be >= 1", integer=True)
    check("VERIFY", "ATLAS_N", lambda v: v >= 16, "must be >= 16", integer=True)
    check("VERIFY", "FLOW_N", lambda v: v >= 16, "must be >= 16", integer=True)
    check("VERIFY", "FLOW_CAP", lambda v: v > 1, "must be > 1 (the unit circle starts at sup|II| = 1)")
    check("OUTPUT", "SEED", lambda v: v >= 0, "must be >= 0", integer=True)

    if raw["SCENARIO"] == "from_file" and not geo.get("FROM_FILE"):
        errors.append("GEOMETRY.FROM_FILE is required for scenario from_file")

    if not errors:
        try:
            initial = build_initial(raw["SCENARIO"], geo, raw["DISCRETIZATION"]["N"])
        except (ValueError, OSError) as exc:
            errors.append(f"cannot build the initial immersion: {exc}")
        else:
            if not raw["CAPS"]["CURVATURE_CAP"] > initial.sup_ii:
                errors.append(
                    f"CAPS.CURVATURE_CAP must exceed the initial sup|II|={initial.sup_ii:.6g}, "
                    f"got {raw['CAPS']['CURVATURE_CAP']!r}"
                )
    return errors


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    geometry: Dict[str, Any]
    n: int
    flow: FlowSettings
    classify: ClassifySettings
    blowup: Dict[str, Any]
    shrinker: Dict[str, Any]
    verify: Dict[str, Any]
    out_dir: str
    seed: int
    log_level: str
    raw: Dict[str, Any] = field(repr=False, default_factory=dict)

    @classmethod
    def from_raw(cls, raw: Dict[str, Any]) -> "ScenarioConfig":
        disc, caps, cls_cfg = raw["DISCRETIZATION"], raw["CAPS"], raw["CLASSIFY"]
        flow = FlowSettings(
            c_cfl=float(disc["C_CFL"]),
            curvature_cap=float(caps["CURVATURE_CAP"]),
            t_max=float(caps["T_MAX"]),
            resample_every=int(disc["RESAMPLE_EVERY"]),
            resample_mode=str(disc["RESAMPLE_MODE"]),
            resample_weight=float(disc["RESAMPLE_WEIGHT"]),
            step_tol=float(disc["STEP_TOL"]),
            dt_min=float(disc["DT_MIN"]),
            snapshot_growth=float(disc["SNAPSHOT_GROWTH"]),
            max_steps=int(disc["MAX_STEPS"]),
        )
        classify = ClassifySettings(
            tail_fraction=float(cls_cfg["TAIL_FRACTION"]),
            band_ratio=float(cls_cfg["BAND_RATIO"]),
            growth_threshold=float(cls_cfg["GROWTH_THRESHOLD"]),
            c_floor=float(cls_cfg["C_FLOOR"]),
            min_snapshots=int(cls_cfg["MIN_SNAPSHOTS"]),
            sigma_guard=float(cls_cfg["SIGMA_GUARD"]),
            compact_tol=float(cls_cfg["COMPACT_TOL"]),
        )
        return cls(
            scenario=raw["SCENARIO"],
            geometry=raw["GEOMETRY"],
            n=int(disc["N"]),
            flow=flow,
            classify=classify,
            blowup=raw["BLOWUP"],
            shrinker=raw["SHRINKER"],
            verify=raw["VERIFY"],
            out_dir=raw["OUTPUT"]["OUT_DIR"],
            seed=int(raw["OUTPUT"]["SEED"]),
            log_level=str(raw["LOG_LEVEL"]).upper(),
            raw=raw,
        )

    def build_initial(self):
        return build_initial(self.scenario, self.geometry, self.n)

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self.raw)


def load_config(path: Optional[str] = None, env: Optional[Mapping[str, str]] = None) -> ScenarioConfig:
    """Умолчания LAB_CONFIG, затем JSON-файл, затем CURVLAB_* из окружения; проверка до любых вычислений."""
    errors: List[str] = []
    raw = copy.deepcopy(LAB_CONFIG)
    if path:
        try:
            with open(path, "r", encoding="utf-8") as f:
                override = json.load(f)
        except FileNotFoundError:
            raise ConfigError([f"config file not found: {path}"])
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}: invalid JSON ({exc})"])
        if not isinstance(override, dict):
            raise ConfigError([f"{path}: top level must be an object"])
        raw = deep_merge(raw, override, errors)
    raw = apply_env_overrides(raw, env)
    errors.extend(validate(raw))
    if errors:
        raise ConfigError(errors)
    disc = raw["DISCRETIZATION"]
    if raw["SCENARIO"] == "limacon" and disc["RESAMPLE_EVERY"] and disc["RESAMPLE_MODE"] == "arclength":
        logger.warning(
            "limacon with arclength resampling every %d steps thins the inner loop; use RESAMPLE_MODE curvature",
            disc["RESAMPLE_EVERY"],
        )
    return ScenarioConfig.from_raw(raw)
