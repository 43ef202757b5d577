import json
import os

import pytest

import curvlab
from handlers.commands_utils import EXIT_FAIL, EXIT_OK, EXIT_USAGE, print_rows
from services.store import read_json, verify_manifest

SMALL_CIRCLE = {"SCENARIO": "circle", "DISCRETIZATION": {"N": 64}, "CAPS": {"CURVATURE_CAP": 50.0}}


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "circle.json"
    path.write_text(json.dumps(SMALL_CIRCLE), encoding="utf-8")
    return str(path)


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in list(os.environ):
        if name.startswith("CURVLAB_"):
            monkeypatch.delenv(name)


def test_usage_errors(tmp_path):
    assert curvlab.main(["frobnicate"]) == EXIT_USAGE
    assert curvlab.main(["verify", "--suite", "everything", "--out", str(tmp_path)]) == EXIT_USAGE
    assert curvlab.main(["--config", str(tmp_path / "missing.json"), "flow"]) == EXIT_USAGE
    assert curvlab.main(["blowup", "--store", str(tmp_path / "no_store")]) == EXIT_USAGE
    assert curvlab.main(["monotone", "--store", str(tmp_path), "--x0", "1,2,3"]) == EXIT_USAGE


def test_flow_then_blowup(small_config, tmp_path, capsys):
    store = str(tmp_path / "circle")
    assert curvlab.main(["--config", small_config, "flow", "--out", store]) == EXIT_OK
    out = capsys.readouterr().out
    assert "class: TypeI" in out
    metadata = read_json(os.path.join(store, "metadata.json"))
    assert metadata["singularity"]["kind"] == "TypeI"
    assert metadata["config"]["DISCRETIZATION"]["N"] == 64

    assert curvlab.main(["blowup", "--store", store, "--j", "4"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "[PASS] blowup.limit_cauchy" in out
    assert "[FAIL]" not in out
    shrinker = read_json(os.path.join(store, "shrinker.json"))
    assert shrinker["shrinker"]["class"] == "Sphere"
    blowup = read_json(os.path.join(store, "blowup.json"))
    assert len(blowup["central_sequence"]) == 4
    assert os.path.isfile(os.path.join(store, "frames", "frame_j4_s4.csv"))
    assert verify_manifest(store) == []


def test_monotone_rejects_t0_inside_the_trajectory(small_config, tmp_path):
    store = str(tmp_path / "circle")
    assert curvlab.main(["--config", small_config, "flow", "--out", store]) == EXIT_OK
    assert curvlab.main(["monotone", "--store", store, "--x0", "0,0", "--t0", "0.1"]) == EXIT_USAGE
    assert curvlab.main(["monotone", "--store", store, "--x0", "0,0", "--t0", "0.6"]) == EXIT_OK
    report = read_json(os.path.join(store, "monotone.json"))
    assert report["monotone"] and report["scaling_identity"]["pass"]


def test_flow_is_deterministic(small_config, tmp_path):
    first, second = str(tmp_path / "a"), str(tmp_path / "b")
    assert curvlab.main(["--config", small_config, "flow", "--out", first]) == EXIT_OK
    assert curvlab.main(["--config", small_config, "flow", "--out", second]) == EXIT_OK
    digests = [
        {name: entry["sha256"] for name, entry in read_json(os.path.join(d, "manifest.json"))["files"].items()}
        for d in (first, second)
    ]
    assert digests[0] == digests[1]


def test_atlas_on_a_stored_snapshot(small_config, tmp_path):
    store = str(tmp_path / "circle")
    curvlab.main(["--config", small_config, "flow", "--out", store])
    assert curvlab.main(["atlas", "--store", store, "--snapshot", "0", "--level", "2"]) == EXIT_OK
    atlas = read_json(os.path.join(store, "atlas.json"))
    assert atlas["snapshot"] == 0
    assert [level["l"] for level in atlas["levels"]] == [1, 2]
    assert atlas["certificate"]["pass"]
    assert curvlab.main(["atlas", "--store", store, "--snapshot", "100000"]) == EXIT_USAGE


def test_verify_lemmas_writes_a_report(tmp_path, capsys):
    config = tmp_path / "small.json"
    config.write_text(json.dumps({"VERIFY": {"PATCH_COUNT": 20}}), encoding="utf-8")
    assert curvlab.main(["--config", str(config), "verify", "--suite", "lemmas", "--out", str(tmp_path)]) == EXIT_OK
    report = read_json(str(tmp_path / "verify_lemmas.json"))
    assert report["pass"]
    assert "[PASS] lemmas.cubic_origin" in capsys.readouterr().out


def test_print_rows_counts_failures(capsys):
    failed = print_rows([("a", True, "ok"), ("b", False, "bad")], prefix="x.")
    assert failed == 1
    assert capsys.readouterr().out.splitlines() == ["[PASS] x.a: ok", "[FAIL] x.b: bad"]


def test_flow_without_a_singularity_fails(tmp_path, capsys):
    config = tmp_path / "ellipse.json"
    config.write_text(
        json.dumps({"SCENARIO": "ellipse", "DISCRETIZATION": {"N": 64}, "CAPS": {"T_MAX": 0.05}}),
        encoding="utf-8",
    )
    store = str(tmp_path / "ellipse")
    assert curvlab.main(["--config", str(config), "flow", "--out", store]) == EXIT_FAIL
    assert "class: NoSingularityDetected" in capsys.readouterr().out
    assert read_json(os.path.join(store, "metadata.json"))["terminal_event"] == "t_max"
