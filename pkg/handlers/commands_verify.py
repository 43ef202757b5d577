import logging
import os
from typing import Optional

from handlers.commands_utils import EXIT_FAIL, EXIT_OK, UsageError, print_rows
from services.store import write_json
from utils.helpers import ScenarioConfig
from utils.suites import SUITES, run_suite

logger = logging.getLogger(__name__)


def cmd_verify(config: ScenarioConfig, suite: str, out: Optional[str] = None) -> int:
    """Прогоняет набор инвариантов (или все) и пишет verify_<suite>.json."""
    if suite not in SUITES + ("all",):
        raise UsageError(f"unknown suite {suite!r}; choose from {', '.join(SUITES + ('all',))}")
    names = SUITES if suite == "all" else (suite,)
    report = {"suite": suite, "results": {}}
    failed = 0
    for name in names:
        logger.info("Running suite %s", name)
        rows, details = run_suite(name, config.verify)
        failed += print_rows(rows, prefix=f"{name}.")
        report["results"][name] = {
            "pass": all(ok for _, ok, _ in rows),
            "checks": [{"name": n, "pass": ok, "details": d} for n, ok, d in rows],
            "details": details,
        }
    report["pass"] = failed == 0
    out_dir = out or config.out_dir
    path = write_json(os.path.join(out_dir, f"verify_{suite}.json"), report)
    print(f"verify {suite}: {'pass' if failed == 0 else f'{failed} failed'} -> {path}")
    return EXIT_OK if failed == 0 else EXIT_FAIL
