import logging
import os
from typing import Any, Dict, List, Optional

import numpy as np

from handlers.commands_utils import EXIT_FAIL, EXIT_OK, UsageError, print_rows, store_config
from services.blowup import (
    CentralSequence,
    FrameIntervalError,
    ScheduleError,
    centering_offsets,
    central_sequence_typeI,
    central_sequence_typeII,
    check_rescaled_bound,
    estimate_singular_point,
    extract_limit,
    rescale,
    uniform_convergence,
)
from services.mcflow import FlowTrajectory
from services.shrinker import classify_blowup
from services.store import FRAMES_DIR, load_trajectory, write_json, write_manifest, write_snapshot_csv

logger = logging.getLogger(__name__)

BLOWUP_JSON = "blowup.json"
SHRINKER_JSON = "shrinker.json"


def _frames_for(traj: FlowTrajectory, cs: CentralSequence, j: int, s_grid, centering: str, x0):
    frames = []
    for s in s_grid:
        try:
            frames.extend(rescale(traj, cs, j, [s], centering, x0))
        except FrameIntervalError as exc:
            logger.info("Skipping frame j=%d: %s", j, exc)
    return frames


def run_blowup(
    traj: FlowTrajectory,
    j_count: int,
    s_grid: List[float],
    centering: str,
    blowup_cfg: Dict[str, Any],
) -> Dict[str, Any]:
    """Центральная последовательность -> кадры -> предел -> вердикт; без записи на диск."""
    singularity = traj.singularity
    if singularity is None or singularity.kind not in ("TypeI", "TypeII"):
        kind = "unclassified" if singularity is None else singularity.kind
        raise UsageError(f"store is {kind}; blow-up needs a TypeI or TypeII classification from `curvlab.py flow`")
    mode = singularity.kind
    if 0.0 not in s_grid:
        raise UsageError("BLOWUP.S_GRID must contain s = 0 for the limit check")
    if mode == "TypeI":
        cs = central_sequence_typeI(traj, j_count=j_count)
    else:
        cs = central_sequence_typeII(traj, j_count=j_count, rate=blowup_cfg["TTILDE_RATE"])

    try:
        x0 = estimate_singular_point(traj, cs)
    except ScheduleError as exc:
        if centering == "tangent":
            raise
        logger.warning("No singular point estimate: %s", exc)
        x0 = None

    frames = {entry.j: _frames_for(traj, cs, entry.j, s_grid, centering, x0) for entry in cs.entries}
    at_zero = [f for entry in cs.entries for f in frames[entry.j] if f.s == 0.0]
    limit = extract_limit(
        at_zero, tol_limit=blowup_cfg["LIMIT_TOL"], slack=blowup_cfg["CAUCHY_SLACK"],
        floor=blowup_cfg["CAUCHY_FLOOR"], levels=blowup_cfg["LIMIT_LEVELS"],
    )
    bounds = {j: check_rescaled_bound(frames[j], cs, j, blowup_cfg["BOUND_TOL"]) for j in frames if frames[j]}
    uniform = uniform_convergence(traj, cs, s_grid, centering, blowup_cfg["CAUCHY_SLACK"], blowup_cfg["CAUCHY_FLOOR"])
    offsets = None if x0 is None else centering_offsets(traj, cs, x0)

    last = cs.entries[-1].j
    if centering == "tangent" or offsets is None:
        center = np.zeros(2)
    else:
        center = np.asarray(offsets.offsets[-1])
    verdict = classify_blowup(mode, at_zero[-1], frames[last], center, t_hat=cs.t_hat)
    return {
        "mode": mode,
        "centering": centering,
        "sequence": cs,
        "x0": x0,
        "frames": frames,
        "limit": limit,
        "bounds": bounds,
        "uniform": uniform,
        "offsets": offsets,
        "verdict": verdict,
    }


def _checks(result: Dict[str, Any]):
    limit = result["limit"]
    rows = [
        ("limit_cauchy", limit.cauchy, f"{limit.verdict}: " + ", ".join(f"{d:.3g}" for d in limit.distances)),
        ("central_curvature", bool(limit.central_ok), f"|II| at the central vertex = {limit.central_ii:.6g}"),
        ("shrinker_verdict", result["verdict"].passed, result["verdict"].note),
    ]
    if result["mode"] == "TypeII":
        worst = max((b.max_ratio for b in result["bounds"].values()), default=0.0)
        ok = all(b.passed for b in result["bounds"].values())
        rows.append(("rescaled_bound", ok, f"max |II|^2 / bound = {worst:.4g}"))
    return rows


def cmd_blowup(store: str, j_count: Optional[int] = None, centering: Optional[str] = None) -> int:
    """Раздутие по классифицированному хранилищу: blowup.json, shrinker.json, frames/*.csv."""
    config = store_config(store)
    traj = load_trajectory(store)
    j_count = j_count or config.blowup["J_COUNT"]
    centering = centering or config.blowup["CENTERING"]
    s_grid = [float(s) for s in config.blowup["S_GRID"]]
    result = run_blowup(traj, j_count, s_grid, centering, config.blowup)

    files = []
    for j, frames in result["frames"].items():
        for frame in frames:
            k = s_grid.index(frame.s)
            name = os.path.join(FRAMES_DIR, f"frame_j{j}_s{k}.csv")
            write_snapshot_csv(os.path.join(store, name), frame.immersion)
            files.append(name)

    cs = result["sequence"]
    report = {
        "mode": result["mode"],
        "centering": centering,
        "t_hat": cs.t_hat,
        "central_sequence": [entry.to_dict() for entry in cs.entries],
        "limit_vertex": cs.limit_vertex,
        "warnings": cs.warnings,
        "x0": None if result["x0"] is None else [float(c) for c in result["x0"]],
        "s_grid": s_grid,
        "frames": {
            str(j): [frame.to_dict() for frame in frames] for j, frames in result["frames"].items()
        },
        "limit": result["limit"].to_dict(),
        "rescaled_bound": {str(j): b.to_dict() for j, b in result["bounds"].items()},
        "uniform_convergence": result["uniform"].to_dict(),
        "centering_offsets": None if result["offsets"] is None else result["offsets"].to_dict(),
    }
    rows = _checks(result)
    report["checks"] = [{"name": n, "pass": ok, "details": d} for n, ok, d in rows]
    write_json(os.path.join(store, BLOWUP_JSON), report)
    write_json(os.path.join(store, SHRINKER_JSON), result["verdict"].to_dict())
    write_manifest(store, files + [BLOWUP_JSON, SHRINKER_JSON])

    failed = print_rows(rows, prefix="blowup.")
    verdict = result["verdict"].shrinker
    print(f"limit class: {verdict.shrinker_class}, alpha={verdict.alpha:.6g}, residual={verdict.normalized_residual:.3g}")
    return EXIT_OK if failed == 0 else EXIT_FAIL
