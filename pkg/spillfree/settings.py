"""
Run configuration.

Values come from, in decreasing priority: a JSON config file or explicit
overrides, SPILLFREE_* environment variables, a .env file, and defaults.
Nested sections use a double underscore in environment names, for example
SPILLFREE_SOLVER__MAX_ITER=5000.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .exceptions import ConfigError, TrajectoryFileError
from .io import read_json
from .manipulator.robot import RobotModel
from .pendulum import INPUT_DIM, STATE_DIM, PendulumParams
from .qp_builder import TrajectorySpec
from .qp_solver import SolverSettings

logger = logging.getLogger(__name__)

DEFAULT_ROD_LENGTH = 0.6
DEFAULT_TS = 0.033
DEFAULT_ROBOT = Path(__file__).resolve().parent.parent / "config" / "panda.json"

Bound = Optional[List[Optional[float]]]


def _expand(values: Bound, size: int, fill: float, name: str) -> Optional[np.ndarray]:
    # null entries in a bound list mean unbounded
    if values is None:
        return None
    if len(values) == 1:
        values = values * size
    if len(values) != size:
        raise ValueError(f"{name} needs {size} entries, got {len(values)}")
    return np.array([fill if v is None else v for v in values], dtype=float)


class BoundsConfig(BaseModel):
    """Per-node box bounds on states and inputs, and bounds on input rate."""

    model_config = ConfigDict(extra="forbid")

    state_lower: Bound = None
    state_upper: Bound = None
    input_lower: Bound = None
    input_upper: Bound = None
    jerk_lower: Bound = None
    jerk_upper: Bound = None

    @model_validator(mode="after")
    def check_order(self):
        for lower_name, upper_name, size in (
            ("state_lower", "state_upper", STATE_DIM),
            ("input_lower", "input_upper", INPUT_DIM),
            ("jerk_lower", "jerk_upper", INPUT_DIM),
        ):
            lower = _expand(getattr(self, lower_name), size, -np.inf, lower_name)
            upper = _expand(getattr(self, upper_name), size, np.inf, upper_name)
            if lower is not None and upper is not None and np.any(lower > upper):
                raise ValueError(f"{lower_name} exceeds {upper_name}")
        return self

    def arrays(self) -> Dict[str, Optional[np.ndarray]]:
        sizes = {"state": STATE_DIM, "input": INPUT_DIM, "jerk": INPUT_DIM}
        result = {}
        for prefix, size in sizes.items():
            result[f"{prefix}_lower"] = _expand(getattr(self, f"{prefix}_lower"), size, -np.inf, prefix)
            result[f"{prefix}_upper"] = _expand(getattr(self, f"{prefix}_upper"), size, np.inf, prefix)
        return result


class PinsConfig(BaseModel):
    """Boundary conditions and intermediate waypoint pins."""

    model_config = ConfigDict(extra="forbid")

    pin_start: bool = True
    pin_end: bool = True
    rest_to_rest: bool = True
    waypoints: Dict[int, Tuple[float, float, float]] = Field(default_factory=dict)


class SpillfreeSettings(BaseSettings):
    """Settings for one pipeline run."""

    model_config = SettingsConfigDict(
        env_prefix="SPILLFREE_",
        env_file=".env",
        env_file_encoding="utf-8",
        env_nested_delimiter="__",
        extra="ignore",
    )

    log: str = "INFO"
    gravity: float = Field(9.81, gt=0)
    mass: float = Field(1.0, gt=0)
    rod_length: Optional[float] = Field(None, gt=0)
    object_height: Optional[float] = Field(None, gt=0)
    ratio: Optional[float] = Field(None, gt=0)
    Ts: float = DEFAULT_TS
    horizon: float = Field(3.0, gt=0)
    step: float = 0.3
    step_profile: Literal["hard", "smooth"] = "hard"
    yaw: float = 0.0
    robot: Optional[Path] = None
    q0: Optional[List[float]] = None
    bounds: BoundsConfig = Field(default_factory=BoundsConfig)
    pins: PinsConfig = Field(default_factory=PinsConfig)
    solver: SolverSettings = Field(default_factory=SolverSettings)

    @field_validator("log")
    @classmethod
    def check_log(cls, value: str) -> str:
        level = value.upper()
        if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"unknown log level {value!r}")
        return level

    @field_validator("Ts")
    @classmethod
    def check_ts(cls, value: float) -> float:
        if not value > 0:
            raise ValueError(f"Ts must be positive, got {value}")
        return value

    @model_validator(mode="after")
    def check_geometry(self):
        if self.ratio is not None:
            if self.rod_length is not None:
                raise ValueError("rod_length and (object_height, ratio) are mutually exclusive")
            if self.object_height is None:
                raise ValueError("ratio requires object_height")
        return self

    def pendulum_params(self) -> PendulumParams:
        """Pendulum parameters; rod length 0.6 m when neither form is given."""
        if self.ratio is not None:
            return PendulumParams.from_ratio(
                self.object_height, self.ratio, gravity=self.gravity, mass=self.mass
            )
        return PendulumParams(
            rod_length=self.rod_length if self.rod_length is not None else DEFAULT_ROD_LENGTH,
            gravity=self.gravity,
            mass=self.mass,
            object_height=self.object_height,
        )

    def trajectory_spec(self, desired: np.ndarray) -> TrajectorySpec:
        """TrajectorySpec for (N+1, 6) desired mass positions and velocities."""
        return TrajectorySpec(
            desired=desired,
            Ts=self.Ts,
            pin_start=self.pins.pin_start,
            pin_end=self.pins.pin_end,
            rest_to_rest=self.pins.rest_to_rest,
            waypoints=dict(self.pins.waypoints),
            **self.bounds.arrays(),
        )

    def robot_model(self) -> RobotModel:
        """Robot model from the configured file (bundled 7-DoF arm by default) with payload."""
        model = RobotModel.load(self.robot or DEFAULT_ROBOT)
        return model.with_payload(self.mass)

    def report(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


def load_settings(path: Optional[Union[str, Path]] = None, **overrides: Any) -> SpillfreeSettings:
    """
    Build settings from an optional JSON file plus explicit overrides.

    Raises:
        ConfigError: If the file cannot be read or the values are invalid
    """
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            data = read_json(path)
        except TrajectoryFileError as e:
            raise ConfigError(f"cannot load config {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        settings = SpillfreeSettings(**data)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e
    logger.debug(f"Loaded settings from {path or 'environment'}")
    return settings


def environment_log_level() -> str:
    """Log level from SPILLFREE_LOG and .env, INFO when the environment settings are invalid."""
    try:
        return SpillfreeSettings().log
    except ValidationError:
        return "INFO"
