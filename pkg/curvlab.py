import argparse
import logging
import sys
from typing import List, Optional

from dotenv import load_dotenv

from config import LAB_CONFIG
from handlers.commands import (
    EXIT_FAIL,
    EXIT_USAGE,
    UsageError,
    cmd_atlas,
    cmd_blowup,
    cmd_flow,
    cmd_monotone,
    cmd_verify,
)
from services.blowup import CENTERINGS
from services.store import StoreNotFoundError
from utils.helpers import ConfigError, load_config

logger = logging.getLogger(__name__)


def _point(value: str) -> List[float]:
    try:
        parts = [float(p) for p in value.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y, got {value!r}")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected x,y, got {value!r}")
    return parts


def _parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(prog="curvlab", description="Mean curvature flow laboratory")
    parser.add_argument("--config", help="JSON file merged over the defaults in config.py")
    sub = parser.add_subparsers(dest="command", required=True)

    verify = sub.add_parser("verify", help="run an invariant suite")
    verify.add_argument("--suite", required=True, help="lemmas | atlas | monotonicity | all")
    verify.add_argument("--out", help="directory for verify_<suite>.json")

    flow = sub.add_parser("flow", help="integrate a scenario and classify its singularity")
    flow.add_argument("--out", help="store directory (default OUT_DIR/<scenario>)")

    blowup = sub.add_parser("blowup", help="blow up a classified store")
    blowup.add_argument("--store", required=True)
    blowup.add_argument("--j", type=int, help="number of central points")
    blowup.add_argument("--centering", choices=CENTERINGS)

    monotone = sub.add_parser("monotone", help="Huisken monotonicity along a store")
    monotone.add_argument("--store", required=True)
    monotone.add_argument("--x0", type=_point, help="kernel center x,y (default: blow-up estimate)")
    monotone.add_argument("--t0", type=float, help="kernel time (default: estimated T)")

    atlas = sub.add_parser("atlas", help="Langer atlas report on a stored snapshot")
    atlas.add_argument("--store", required=True)
    atlas.add_argument("--snapshot", type=int, default=-1)
    atlas.add_argument("--alpha", type=float, default=1.0)
    atlas.add_argument("--rho", type=float)
    atlas.add_argument("--level", type=int, default=3)
    return parser.parse_args(argv)


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    try:
        args = _parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else 0
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        logging.basicConfig(format="%(asctime)s - %(name)s - %(levelname)s - %(message)s", level=logging.INFO)
        logger.error("%s", exc)
        return EXIT_USAGE
    logging.basicConfig(
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        level=getattr(logging, config.log_level, logging.INFO),
    )
    logger.info("%s: %s", LAB_CONFIG["ARTIFACT_VERSION"], args.command)

    try:
        if args.command == "verify":
            return cmd_verify(config, args.suite, args.out)
        if args.command == "flow":
            return cmd_flow(config, args.out)
        if args.command == "blowup":
            return cmd_blowup(args.store, args.j, args.centering)
        if args.command == "monotone":
            return cmd_monotone(args.store, args.x0, args.t0)
        if args.command == "atlas":
            return cmd_atlas(args.store, args.snapshot, args.alpha, args.rho, args.level)
    except (UsageError, StoreNotFoundError, ConfigError) as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception:
        logger.exception("curvlab %s failed", args.command)
        return EXIT_FAIL
    return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
