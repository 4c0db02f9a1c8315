import json
import math

import numpy as np
import pytest

from spillfree.exceptions import ConfigError
from spillfree.settings import BoundsConfig, environment_log_level, load_settings

from conftest import ROOT


@pytest.fixture(autouse=True)
def isolated(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    for name in ("SPILLFREE_TS", "SPILLFREE_ROD_LENGTH", "SPILLFREE_SOLVER__MAX_ITER", "SPILLFREE_LOG"):
        monkeypatch.delenv(name, raising=False)


def test_defaults():
    settings = load_settings()
    assert settings.Ts == 0.033
    assert settings.pendulum_params().rod_length == 0.6
    assert settings.pins.rest_to_rest
    assert settings.solver.max_iter == 20000


def test_ratio_form():
    params = load_settings(object_height=0.1, ratio=3.0).pendulum_params()
    assert math.isclose(params.rod_length, 0.3)
    assert math.isclose(params.ratio, 3.0)


@pytest.mark.parametrize(
    "values",
    [
        {"rod_length": 0.5, "object_height": 0.1, "ratio": 6.0},
        {"ratio": 6.0},
        {"Ts": 0.0},
        {"Ts": -0.01},
        {"log": "LOUD"},
        {"step_profile": "ramp"},
        {"pins": {"pin_middle": True}},
        {"bounds": {"input_lower": [1.0], "input_upper": [0.0]}},
        {"bounds": {"state_upper": [1.0, 2.0]}},
    ],
)
def test_invalid_values(values):
    with pytest.raises(ConfigError):
        load_settings(**values)


def test_environment_overrides_defaults(monkeypatch):
    monkeypatch.setenv("SPILLFREE_TS", "0.05")
    monkeypatch.setenv("SPILLFREE_SOLVER__MAX_ITER", "5000")
    settings = load_settings()
    assert settings.Ts == 0.05
    assert settings.solver.max_iter == 5000


def test_environment_log_level(monkeypatch):
    assert environment_log_level() == "INFO"
    monkeypatch.setenv("SPILLFREE_LOG", "debug")
    assert environment_log_level() == "DEBUG"
    monkeypatch.setenv("SPILLFREE_LOG", "loud")
    assert environment_log_level() == "INFO"


def test_file_overrides_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("SPILLFREE_TS", "0.05")
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"Ts": 0.02, "rod_length": 0.4}))
    settings = load_settings(path)
    assert settings.Ts == 0.02
    assert settings.pendulum_params().rod_length == 0.4


def test_explicit_overrides_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"Ts": 0.02}))
    assert load_settings(path, Ts=0.01).Ts == 0.01


def test_missing_and_invalid_files(tmp_path):
    with pytest.raises(ConfigError):
        load_settings(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError):
        load_settings(bad)
    listed = tmp_path / "list.json"
    listed.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_settings(listed)


def test_bundled_default_config():
    settings = load_settings(ROOT / "config" / "default.json")
    spec = settings.trajectory_spec(np.zeros((4, 6)))
    assert np.isinf(spec.state_upper[0])
    assert math.isclose(spec.state_upper[3], math.pi / 4)
    assert spec.jerk_upper[0] == 6500.0


def test_bounds_broadcast_and_nulls():
    bounds = BoundsConfig(
        state_upper=[None, None, None, 0.5, 0.5, None, None, None, None, None],
        input_upper=[2.0],
    )
    arrays = bounds.arrays()
    assert np.isinf(arrays["state_upper"][0])
    assert arrays["state_upper"][3] == 0.5
    np.testing.assert_array_equal(arrays["input_upper"], [2.0, 2.0, 2.0])
    assert arrays["jerk_lower"] is None


def test_trajectory_spec_carries_pins():
    settings = load_settings(pins={"rest_to_rest": False, "waypoints": {"2": [0.1, 0.0, -0.5]}})
    spec = settings.trajectory_spec(np.zeros((5, 6)))
    assert not spec.rest_to_rest
    np.testing.assert_array_equal(spec.waypoints[2], [0.1, 0.0, -0.5])


def test_robot_model_includes_payload():
    settings = load_settings(mass=2.0)
    model = settings.robot_model()
    assert model.name == "panda"
    assert model.n == 7
    assert model.inertia[-1].mass > 2.0


def test_report_is_json_serializable():
    report = load_settings(object_height=0.1, ratio=6.0).report()
    json.dumps(report)
    assert report["ratio"] == 6.0
