"""Каталог траектории: metadata.json, series.csv, snapshots/*.csv, manifest.json.

Все числа пишутся с 17 значащими цифрами, JSON с sort_keys, так что повторный
прогон с тем же конфигом даёт побайтно те же CSV.
"""

import csv
import hashlib
import json
import logging
import math
import os
import shutil
import time
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from config import LAB_CONFIG
from services.immersion import AxisymProfile, DiscreteCurve, DiscreteImmersion
from services.mcflow import FlowSettings, FlowTrajectory, SingularityClass, s_of_t

logger = logging.getLogger(__name__)

METADATA = "metadata.json"
SERIES = "series.csv"
MANIFEST = "manifest.json"
SNAPSHOT_DIR = "snapshots"
FRAMES_DIR = "frames"
SERIES_HEADER = ("t", "sup_II", "measure", "s_of_t", "argmax")


class StoreNotFoundError(FileNotFoundError):
    """Каталог траектории или его metadata.json отсутствует."""


def fmt17(value: Any) -> str:
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "nan"
    return format(value, ".17g")


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def write_json(path: str, data: Dict[str, Any]) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_jsonable(data), f, sort_keys=True, indent=2, ensure_ascii=False)
        f.write("\n")
    return path


def read_json(path: str) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_rows_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt17(v) for v in row])
    return path


def _snapshot_columns(imm: DiscreteImmersion):
    if isinstance(imm, DiscreteCurve):
        return ("index", "x", "y", "k"), (imm.vertices[:, 0], imm.vertices[:, 1], imm.curvature)
    if imm.chart == "polar":
        return ("index", "theta", "rho"), (imm.coords, imm.values)
    return ("index", "x", "u"), (imm.coords, imm.values)


def write_snapshot_csv(path: str, imm: DiscreteImmersion) -> str:
    header, columns = _snapshot_columns(imm)
    rows = ((i, *values) for i, values in enumerate(zip(*columns)))
    return write_rows_csv(path, header, rows)


def read_snapshot_csv(
    path: str,
    m: int = LAB_CONFIG["GEOMETRY"]["DIM_M"],
    closed: bool = True,
    boundary: str = "neumann",
    axial_shift: float = 0.0,
) -> DiscreteImmersion:
    """Кривая (x,y[,k]), профиль-график (x,u) или полярный профиль (theta,rho) по заголовку."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = [name.strip() for name in next(reader)]
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.array(rows)
    columns = {name: data[:, i] for i, name in enumerate(header)}
    if "y" in columns:
        return DiscreteCurve(np.stack([columns["x"], columns["y"]], axis=1), closed=closed)
    if "rho" in columns:
        return AxisymProfile(columns["theta"], columns["rho"], m=m, chart="polar", axial_shift=axial_shift)
    if "u" in columns:
        return AxisymProfile(columns["x"], columns["u"], m=m, chart="graph", boundary=boundary, axial_shift=axial_shift)
    raise ValueError(f"{path}: unrecognized snapshot header {header}")


def _immersion_meta(imm: DiscreteImmersion) -> Dict[str, Any]:
    if isinstance(imm, DiscreteCurve):
        return {"kind": "curve", "closed": imm.closed, "size": imm.size}
    return {"kind": "profile", "m": imm.m, "chart": imm.chart, "boundary": imm.boundary, "size": imm.size}


def snapshot_name(index: int) -> str:
    return os.path.join(SNAPSHOT_DIR, f"snap_{index:05d}.csv")


def clear_store(store: str) -> int:
    """Удаляет артефакты прошлого прогона: всё из manifest.json, снимки, кадры, metadata и series."""
    stale = {METADATA, SERIES, MANIFEST}
    manifest = os.path.join(store, MANIFEST)
    if os.path.isfile(manifest):
        stale.update(read_json(manifest).get("files", {}))
    removed = 0
    for name in sorted(stale):
        full = os.path.join(store, name)
        if os.path.isabs(name) or os.path.normpath(name).startswith(".."):
            continue
        if os.path.isfile(full):
            os.remove(full)
            removed += 1
    for folder in (SNAPSHOT_DIR, FRAMES_DIR):
        full = os.path.join(store, folder)
        if os.path.isdir(full):
            removed += len(os.listdir(full))
            shutil.rmtree(full)
    if removed:
        logger.info("Cleared %d stale files from %s", removed, store)
    return removed


def save_trajectory(traj: FlowTrajectory, store: str, config_echo: Optional[Dict[str, Any]] = None) -> List[str]:
    """Пишет снимки, series.csv и metadata.json поверх очищенного каталога; возвращает относительные пути."""
    clear_store(store)
    os.makedirs(os.path.join(store, SNAPSHOT_DIR), exist_ok=True)
    files, index = [], []
    for snap in traj.snapshots:
        name = snapshot_name(snap.index)
        write_snapshot_csv(os.path.join(store, name), snap.immersion)
        files.append(name)
        entry = {"index": snap.index, "t": fmt17(snap.t), "file": name}
        if isinstance(snap.immersion, AxisymProfile):
            entry["axial_shift"] = fmt17(snap.immersion.axial_shift)
        index.append(entry)

    s_values = s_of_t(traj)
    rows = (
        (snap.t, snap.sup_ii, snap.measure, s, snap.argmax) for snap, s in zip(traj.snapshots, s_values)
    )
    write_rows_csv(os.path.join(store, SERIES), SERIES_HEADER, rows)
    files.append(SERIES)

    metadata = {
        "artifact_version": LAB_CONFIG["ARTIFACT_VERSION"],
        "config": config_echo or {},
        "settings": traj.settings.to_dict(),
        "terminal_event": traj.terminal_event,
        "accepted_steps": traj.accepted_steps,
        "rejected_steps": traj.rejected_steps,
        "t_hat": None if traj.t_hat is None else fmt17(traj.t_hat),
        "sigma": None if traj.sigma is None else fmt17(traj.sigma),
        "singularity": None if traj.singularity is None else traj.singularity.to_dict(),
        "immersion": _immersion_meta(traj.snapshots[0].immersion),
        "snapshots": index,
    }
    write_json(os.path.join(store, METADATA), metadata)
    files.append(METADATA)
    logger.info("Saved %d snapshots to %s", len(traj), store)
    return files


def update_metadata(store: str, **fields: Any) -> None:
    path = os.path.join(store, METADATA)
    metadata = read_json(path)
    metadata.update(fields)
    write_json(path, metadata)


def load_trajectory(store: str) -> FlowTrajectory:
    """Обратная операция к save_trajectory (числа восстанавливаются побитно)."""
    path = os.path.join(store, METADATA)
    if not os.path.isfile(path):
        raise StoreNotFoundError(f"no trajectory store at {store!r} (missing {METADATA})")
    metadata = read_json(path)
    settings = FlowSettings(**metadata.get("settings", {}))
    traj = FlowTrajectory(settings=settings)
    meta = metadata["immersion"]
    with open(os.path.join(store, SERIES), "r", encoding="utf-8", newline="") as f:
        argmaxes = [int(row["argmax"]) for row in csv.DictReader(f)]
    for entry, argmax in zip(metadata["snapshots"], argmaxes):
        file_path = os.path.join(store, entry["file"])
        if meta["kind"] == "curve":
            imm = read_snapshot_csv(file_path, closed=meta["closed"])
        else:
            imm = read_snapshot_csv(
                file_path, m=meta["m"], boundary=meta["boundary"], axial_shift=float(entry.get("axial_shift", 0.0))
            )
        traj.append(float(entry["t"]), imm, argmax=argmax)
    traj.terminal_event = metadata.get("terminal_event", "")
    traj.accepted_steps = int(metadata.get("accepted_steps", 0))
    traj.rejected_steps = int(metadata.get("rejected_steps", 0))
    if metadata.get("t_hat") is not None:
        traj.t_hat = float(metadata["t_hat"])
        traj.sigma = float(metadata["sigma"])
    if metadata.get("singularity"):
        traj.singularity = SingularityClass(**metadata["singularity"])
    logger.info("Loaded %d snapshots from %s", len(traj), store)
    return traj


def load_config_echo(store: str) -> Dict[str, Any]:
    path = os.path.join(store, METADATA)
    if not os.path.isfile(path):
        raise StoreNotFoundError(f"no trajectory store at {store!r} (missing {METADATA})")
    return read_json(path).get("config", {})


def file_digest(path: str) -> str:
    sha = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            sha.update(chunk)
    return sha.hexdigest()


def write_manifest(
    store: str,
    files: Sequence[str],
    config_echo: Optional[Dict[str, Any]] = None,
    wall_time: Optional[float] = None,
) -> str:
    """Добавляет files к manifest.json (существующие записи пересчитываются)."""
    path = os.path.join(store, MANIFEST)
    manifest = read_json(path) if os.path.isfile(path) else {"files": {}}
    for name in files:
        full = os.path.join(store, name)
        manifest["files"][name] = {"sha256": file_digest(full), "bytes": os.path.getsize(full)}
    manifest["artifact_version"] = LAB_CONFIG["ARTIFACT_VERSION"]
    if config_echo is not None:
        manifest["config"] = config_echo
    if wall_time is not None:
        manifest["wall_time"] = round(wall_time, 3)
    manifest["written_at"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    return write_json(path, manifest)


def verify_manifest(store: str) -> List[str]:
    """Список расхождений: отсутствующие файлы и несовпавшие хэши/размеры."""
    path = os.path.join(store, MANIFEST)
    if not os.path.isfile(path):
        raise StoreNotFoundError(f"no manifest in {store!r}")
    problems = []
    for name, entry in sorted(read_json(path)["files"].items()):
        full = os.path.join(store, name)
        if not os.path.isfile(full):
            problems.append(f"missing: {name}")
        elif os.path.getsize(full) != entry["bytes"] or file_digest(full) != entry["sha256"]:
            problems.append(f"hash mismatch: {name}")
    return problems
