import logging
import os
from typing import Optional, Sequence, Tuple

import numpy as np

from handlers.commands_utils import EXIT_FAIL, EXIT_OK, UsageError, print_rows, store_config
from services.blowup import central_sequence_typeI, central_sequence_typeII, estimate_singular_point
from services.shrinker import monotonicity_check, scaling_identity_check
from services.store import load_trajectory, read_json, write_json, write_manifest, write_rows_csv

logger = logging.getLogger(__name__)

MONOTONE_CSV = "monotone.csv"
MONOTONE_JSON = "monotone.json"
SCALING_Q = 2.0


def _default_center(store: str, traj) -> Tuple[np.ndarray, float]:
    """(x0, t0) из blowup.json, иначе из той же оценки, что строит раздутие."""
    path = os.path.join(store, "blowup.json")
    if os.path.isfile(path):
        report = read_json(path)
        if report.get("x0") is not None:
            return np.asarray(report["x0"], dtype=float), float(report["t_hat"])
    if traj.t_hat is None or traj.singularity is None:
        raise UsageError("store has no singular time; pass --x0 and --t0 explicitly")
    if traj.singularity.kind == "TypeII":
        cs = central_sequence_typeII(traj)
    else:
        cs = central_sequence_typeI(traj)
    return estimate_singular_point(traj, cs), traj.t_hat


def cmd_monotone(store: str, x0: Optional[Sequence[float]] = None, t0: Optional[float] = None) -> int:
    """Θ(t) около (x0, t0) по всем снимкам: monotone.csv и вердикт monotone.json."""
    traj = load_trajectory(store)
    if x0 is None or t0 is None:
        default_x0, default_t0 = _default_center(store, traj)
        x0 = default_x0 if x0 is None else x0
        t0 = default_t0 if t0 is None else t0
    x0 = np.asarray(x0, dtype=float)
    last = traj.times[-1]
    if not t0 > last:
        raise UsageError(f"t0={t0!r} lies inside the trajectory range (last snapshot at t={last!r})")

    # оценка T не различает моменты ближе SIGMA_GUARD * sigma к ней
    gap = 0.0
    if traj.sigma is not None and t0 == traj.t_hat:
        gap = store_config(store).classify.sigma_guard * traj.sigma
    series = monotonicity_check(traj, x0, t0, resolved_gap=gap)
    write_rows_csv(os.path.join(store, MONOTONE_CSV), ("t", "theta", "rhs", "fd_dtheta"), series.rows())

    a = SCALING_Q**2 * (traj.times[0] - t0)
    b = SCALING_Q**2 * (last - t0)
    scaling = scaling_identity_check(traj, SCALING_Q, x0, a, b, t0=t0)
    report = series.to_dict()
    report["scaling_identity"] = scaling.to_dict()
    write_json(os.path.join(store, MONOTONE_JSON), report)
    write_manifest(store, [MONOTONE_CSV, MONOTONE_JSON])

    rows = [
        ("theta_monotone", series.monotone, f"{len(series.violations)} violations, theta {series.theta[0]:.6g} -> {series.theta[-1]:.6g}"),
        ("theta_derivative", series.derivative_ok, f"{len(series.mismatches)} mismatches (tol {series.deriv_tol})"),
        ("scaling_identity", scaling.passed, f"Q={SCALING_Q:g}, relative {scaling.relative:.3e}"),
    ]
    failed = print_rows(rows, prefix="monotone.")
    return EXIT_OK if failed == 0 else EXIT_FAIL
