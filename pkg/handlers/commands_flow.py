import logging
import os
import time
from typing import Optional

from handlers.commands_utils import EXIT_FAIL, EXIT_OK
from services.mcflow import analyze, run
from services.store import save_trajectory, write_manifest
from utils.helpers import ScenarioConfig

logger = logging.getLogger(__name__)


def cmd_flow(config: ScenarioConfig, out: Optional[str] = None) -> int:
    """Интегрирует сценарий, классифицирует сингулярность и пишет хранилище с манифестом."""
    started = time.monotonic()
    store = out or os.path.join(config.out_dir, config.scenario)
    initial = config.build_initial()
    traj = run(initial, config.flow)
    singularity = analyze(traj, config.classify)
    files = save_trajectory(traj, store, config.to_dict())
    write_manifest(store, files, config.to_dict(), wall_time=time.monotonic() - started)

    t_hat = "n/a" if traj.t_hat is None else f"{traj.t_hat:.17g} ± {traj.sigma:.3g}"
    print(f"flow {config.scenario}: {traj.terminal_event} after {len(traj)} snapshots, T={t_hat}")
    print(f"class: {singularity.kind} {singularity.note}".rstrip())
    if singularity.kind in ("TypeI", "TypeII"):
        print(f"s(t) in [{singularity.s_min:.6g}, {singularity.s_max:.6g}], compact_type={singularity.compact_type}")
    print(f"store: {store}")
    return EXIT_OK if singularity.kind in ("TypeI", "TypeII") else EXIT_FAIL
