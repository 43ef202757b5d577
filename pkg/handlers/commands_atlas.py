import logging
import os
from typing import Optional

from handlers.commands_utils import EXIT_FAIL, EXIT_OK, UsageError, print_rows
from services.langer import (
    check_r_alpha,
    cover_levels,
    embedding_constant,
    injectivity_lower_bound,
    r_max_lemma,
)
from services.store import load_trajectory, write_json, write_manifest

logger = logging.getLogger(__name__)

ATLAS_JSON = "atlas.json"
RHO_FRACTION = 0.99


def cmd_atlas(
    store: str,
    snapshot: int = -1,
    alpha: float = 1.0,
    rho: Optional[float] = None,
    level: int = 3,
) -> int:
    """Атлас Лангера на снимке: сертификат (r, alpha), вложенные покрытия, inj и kappa."""
    traj = load_trajectory(store)
    try:
        snap = traj.snapshots[snapshot]
    except IndexError:
        raise UsageError(f"snapshot {snapshot} not in store ({len(traj)} snapshots)")
    imm = snap.immersion
    r_max = r_max_lemma(alpha, imm.sup_ii)
    rho = RHO_FRACTION * r_max / 2.0 if rho is None else rho
    atlases = cover_levels(imm, snap.argmax, rho, level, alpha=alpha)
    certificate = check_r_alpha(imm, rho / 4.0, alpha)
    injectivity = injectivity_lower_bound(imm)
    kappa = embedding_constant(imm)

    report = atlases[-1].to_dict()
    report.update({
        "snapshot": snap.index,
        "t": snap.t,
        "certificate": certificate.to_dict(),
        "levels": [{"l": a.level, "count": a.count, "K_pow_l": a.bound} for a in atlases],
        "injectivity": injectivity.to_dict(),
        "embedding_constant": kappa,
    })
    path = os.path.join(store, ATLAS_JSON)
    write_json(path, report)
    write_manifest(store, [ATLAS_JSON])

    rows = [
        ("r_alpha", certificate.passed, f"r={rho / 4.0:.6g}, worst slope {certificate.worst_slope:.4g}"),
        ("covering", all(a.count <= a.bound for a in atlases), ", ".join(f"l={a.level}: {a.count}/{a.bound}" for a in atlases)),
        ("injectivity", injectivity.consistent, f"bound {injectivity.bound:.6g}"),
    ]
    failed = print_rows(rows, prefix="atlas.")
    print(f"atlas: snapshot {snap.index} (t={snap.t:.17g}), kappa={kappa:.6g} -> {path}")
    return EXIT_OK if failed == 0 else EXIT_FAIL
