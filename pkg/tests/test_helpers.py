import copy
import json

import pytest

from config import LAB_CONFIG
from utils.helpers import ConfigError, apply_env_overrides, deep_merge, load_config


def _write(tmp_path, payload) -> str:
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def test_defaults_load():
    config = load_config(env={})
    assert config.scenario == "circle"
    assert config.n == LAB_CONFIG["DISCRETIZATION"]["N"]
    assert config.flow.curvature_cap == LAB_CONFIG["CAPS"]["CURVATURE_CAP"]
    assert config.to_dict() == LAB_CONFIG


def test_file_overrides_are_merged(tmp_path):
    path = _write(tmp_path, {"SCENARIO": "sphere_profile", "DISCRETIZATION": {"N": 65}, "CAPS": {"T_MAX": 2.0}})
    config = load_config(path, env={})
    assert config.scenario == "sphere_profile"
    assert config.n == 65
    assert config.flow.t_max == 2.0
    assert config.flow.c_cfl == LAB_CONFIG["DISCRETIZATION"]["C_CFL"]


def test_all_errors_are_reported_together(tmp_path):
    path = _write(tmp_path, {
        "SCENARIO": "torus",
        "DISCRETIZATION": {"N": 4, "C_CFL": 3.0, "BOGUS": 1},
        "NOT_A_SECTION": {},
    })
    with pytest.raises(ConfigError) as excinfo:
        load_config(path, env={})
    errors = excinfo.value.errors
    assert "unknown key DISCRETIZATION.BOGUS" in errors
    assert "unknown key NOT_A_SECTION" in errors
    assert any(e.startswith("SCENARIO must be one of") for e in errors)
    assert any(e.startswith("DISCRETIZATION.N ") for e in errors)
    assert any(e.startswith("DISCRETIZATION.C_CFL ") for e in errors)


def test_type_errors(tmp_path):
    path = _write(tmp_path, {"DISCRETIZATION": {"N": "many"}, "BLOWUP": {"CENTERING": "sideways"}})
    with pytest.raises(ConfigError) as excinfo:
        load_config(path, env={})
    assert any("must be an integer" in e for e in excinfo.value.errors)
    assert any(e.startswith("BLOWUP.CENTERING") for e in excinfo.value.errors)


def test_cap_must_exceed_initial_curvature(tmp_path):
    path = _write(tmp_path, {"CAPS": {"CURVATURE_CAP": 0.5}})
    with pytest.raises(ConfigError, match="initial sup"):
        load_config(path, env={})


def test_missing_and_broken_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(str(tmp_path / "nope.json"), env={})
    broken = tmp_path / "broken.json"
    broken.write_text("{", encoding="utf-8")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(str(broken), env={})


def test_env_overrides():
    env = {
        "CURVLAB_OUT_DIR": " /tmp/runs ",
        "CURVLAB_LOG_LEVEL": "debug",
        "CURVLAB_N": "128",
        "CURVLAB_C_CFL": "0.05",
        "CURVLAB_CURVATURE_CAP": "abc",
    }
    config = load_config(env=env)
    assert config.out_dir == "/tmp/runs"
    assert config.log_level == "DEBUG"
    assert config.n == 128
    assert config.flow.c_cfl == 0.05
    assert config.flow.curvature_cap == LAB_CONFIG["CAPS"]["CURVATURE_CAP"]


def test_env_overrides_do_not_touch_defaults():
    raw = apply_env_overrides(copy.deepcopy(LAB_CONFIG), {"CURVLAB_SEED": "5"})
    assert raw["OUTPUT"]["SEED"] == 5
    assert LAB_CONFIG["OUTPUT"]["SEED"] == 0


def test_patch_nodes_is_a_leaf():
    errors = []
    merged = deep_merge(LAB_CONFIG, {"VERIFY": {"PATCH_NODES": {"1": 11}}}, errors)
    assert errors == []
    assert merged["VERIFY"]["PATCH_NODES"] == {"1": 11}
    assert LAB_CONFIG["VERIFY"]["PATCH_NODES"] == {"1": 9, "2": 9, "3": 7}


def test_resampling_and_flow_suite_settings(tmp_path):
    path = _write(tmp_path, {
        "DISCRETIZATION": {"RESAMPLE_MODE": "spline", "RESAMPLE_WEIGHT": 1.0},
        "VERIFY": {"FLOW_N": 8, "FLOW_CAP": 1.0},
    })
    with pytest.raises(ConfigError) as excinfo:
        load_config(path, env={})
    errors = excinfo.value.errors
    for prefix in ("DISCRETIZATION.RESAMPLE_MODE", "DISCRETIZATION.RESAMPLE_WEIGHT", "VERIFY.FLOW_N", "VERIFY.FLOW_CAP"):
        assert any(e.startswith(prefix) for e in errors), prefix

    config = load_config(_write(tmp_path, {"DISCRETIZATION": {"RESAMPLE_MODE": "curvature"}}), env={})
    assert config.flow.resample_mode == "curvature"
    assert config.flow.resample_weight == LAB_CONFIG["DISCRETIZATION"]["RESAMPLE_WEIGHT"]
