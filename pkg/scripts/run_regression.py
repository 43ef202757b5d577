import argparse
import json
import subprocess
import sys
import tempfile
from pathlib import Path
from typing import Any

ROOT = Path(__file__).resolve().parent.parent


def _parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Run curvlab scenarios and check their singularity verdicts")
    parser.add_argument("--cases", default="tests/regression/cases.json")
    parser.add_argument("--out", default="data/regression")
    parser.add_argument("--only", action="append", default=[], help="case id to run (repeatable)")
    parser.add_argument("--repeat", action="store_true", help="run each flow twice and compare manifests")
    return parser.parse_args()


def _load_cases(path: str) -> list[dict[str, Any]]:
    cases = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(cases, list) or not cases:
        raise RuntimeError("Cases file must be a non-empty JSON array")
    return cases


def _curvlab(*args: str) -> int:
    cmd = [sys.executable, str(ROOT / "curvlab.py"), *args]
    return subprocess.run(cmd, cwd=ROOT).returncode


def _flow(case: dict[str, Any], store: Path, workdir: Path) -> int:
    config_path = workdir / f"{case['id']}.json"
    config_path.write_text(json.dumps(case.get("config", {})), encoding="utf-8")
    return _curvlab("--config", str(config_path), "flow", "--out", str(store))


def _digests(store: Path) -> dict[str, str]:
    files = json.loads((store / "manifest.json").read_text(encoding="utf-8"))["files"]
    return {name: entry["sha256"] for name, entry in files.items()}


def _check_case(case: dict[str, Any], store: Path) -> tuple[bool, str]:
    metadata = json.loads((store / "metadata.json").read_text(encoding="utf-8"))
    singularity = metadata.get("singularity") or {}
    kind = singularity.get("kind")
    expected = case.get("expected_kind")
    if expected is not None and kind != expected:
        return False, f"kind {kind}, expected {expected}"
    details = f"kind={kind}"
    if case.get("t_hat") is not None:
        if metadata.get("t_hat") is None:
            return False, "no singular time estimate"
        t_hat = float(metadata["t_hat"])
        if abs(t_hat - case["t_hat"]) > case.get("t_hat_tol", 1e-3):
            return False, f"T={t_hat:.17g}, expected {case['t_hat']} +- {case.get('t_hat_tol', 1e-3)}"
        details += f" T={t_hat:.10g}"
    return True, details


def main() -> int:
    args = _parse_args()
    cases = _load_cases(args.cases)
    if args.only:
        cases = [case for case in cases if case.get("id") in args.only]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    passed = 0
    failed = 0
    print("=== Curvlab Regression Start ===")
    print(f"cases={len(cases)} out={out}")

    with tempfile.TemporaryDirectory() as tmp:
        workdir = Path(tmp)
        for case in cases:
            case_id = case.get("id", "unknown")
            store = out / case_id
            print(f"[RUN ] {case_id}")
            code = _flow(case, store, workdir)
            if code == 2:
                print(f"[FAIL] {case_id}: flow exit={code}")
                failed += 1
                continue
            ok, details = _check_case(case, store)

            if ok and args.repeat:
                first = _digests(store)
                replay = workdir / f"{case_id}_replay"
                _flow(case, replay, workdir)
                second = _digests(replay)
                differing = sorted(n for n in first if n != "metadata.json" and first[n] != second.get(n))
                if differing:
                    ok, details = False, f"non-deterministic output: {', '.join(differing[:5])}"
            if ok and case.get("blowup"):
                code = _curvlab("blowup", "--store", str(store))
                ok, details = code == 0, f"{details}, blowup exit={code}"
                expected_class = case.get("expected_class")
                if ok and expected_class:
                    verdict = json.loads((store / "shrinker.json").read_text(encoding="utf-8"))
                    found = verdict["shrinker"]["class"]
                    ok = found == expected_class
                    details += f", limit {found}"
            if ok and case.get("monotone"):
                code = _curvlab("monotone", "--store", str(store))
                ok, details = code == 0, f"{details}, monotone exit={code}"

            print(f"[{'PASS' if ok else 'FAIL'}] {case_id}: {details}")
            passed += ok
            failed += not ok

    print("=== Curvlab Regression Done ===")
    print(f"passed={passed} failed={failed}")
    return 0 if failed == 0 else 1


if __name__ == "__main__":
    raise SystemExit(main())
