import pytest

from config import LAB_CONFIG
from utils.suites import SUITES, atlas_suite, monotonicity_suite, run_suite


def _verify(**overrides):
    return {**LAB_CONFIG["VERIFY"], **overrides}


def test_monotonicity_reads_flow_settings():
    rows, report = monotonicity_suite(_verify(FLOW_CAP=20.0))
    assert report["nodes"] == 64 and report["cap"] == 20.0
    assert report["kind"] == "TypeI"
    assert report["t_hat"] == pytest.approx(0.5, abs=1e-3)
    failed = [name for name, ok, _ in rows if not ok]
    assert not failed


def test_atlas_certifies_every_flow_snapshot():
    rows, report = atlas_suite(_verify(ATLAS_N=128, FLOW_CAP=20.0))
    names = {name for name, _, _ in rows}
    for alpha in ("0.5", "1", "1.73205"):
        assert f"snapshots_r_alpha[{alpha}]" in names
        assert report["snapshots"][alpha]["pass"]
        assert report["snapshots"][alpha]["checked"] > 10


def test_unknown_suite():
    assert "atlas" in SUITES
    with pytest.raises(ValueError):
        run_suite("everything")
