"""
File formats: desired trajectories, plans, rollouts, joint trajectories and
JSON reports.

All CSV numbers are written with 17 significant digits so that files re-read
and re-written are byte-identical.
"""

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt

from .exceptions import TrajectoryFileError
from .pendulum import INPUT_LABELS, STATE_DIM, STATE_LABELS
from .trajectory import Trajectory

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]
PathLike = Union[str, Path]

SPACING_TOLERANCE = 1e-9
DESIRED_COLUMNS = ("t", "x", "y", "z")
DESIRED_VELOCITY_COLUMNS = ("vx", "vy", "vz")
PLAN_COLUMNS = ("t",) + STATE_LABELS + INPUT_LABELS
ROLLOUT_COLUMNS = PLAN_COLUMNS + (
    "x_m", "y_m", "z_m",
    "vx_m", "vy_m", "vz_m",
    "ax_m", "ay_m", "az_m",
    "fx_c", "fy_c", "fz_c",
)


@dataclass(frozen=True)
class DesiredTrajectory:
    """Desired mass positions (and optionally velocities) on a uniform grid."""

    times: Array
    positions: Array
    velocities: Optional[Array] = None

    @property
    def Ts(self) -> float:
        return float(self.times[1] - self.times[0])

    def rows(self) -> Array:
        """(N+1, 6) positions and velocities; missing velocities are central differences."""
        velocities = self.velocities
        if velocities is None:
            velocities = np.gradient(self.positions, self.Ts, axis=0)
        return np.hstack((self.positions, velocities))


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def _write_table(path: PathLike, header: Sequence[str], rows: Array) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    logger.debug(f"Wrote {len(rows)} rows to {path}")
    return path


def _read_table(path: PathLike) -> Tuple[List[str], Array]:
    """Read a headed numeric CSV; errors carry 1-based line numbers."""
    path = Path(path)
    try:
        with path.open(newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise TrajectoryFileError(f"cannot read {path}: {e}") from e

    if not rows or not rows[0]:
        raise TrajectoryFileError("missing header", line=1)
    header = [h.strip() for h in rows[0]]
    try:
        [float(h) for h in header]
    except ValueError:
        pass
    else:
        raise TrajectoryFileError("missing header", line=1)

    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise TrajectoryFileError(
                f"expected {len(header)} columns, got {len(row)}", line=lineno
            )
        try:
            parsed = [float(cell) for cell in row]
        except ValueError as e:
            raise TrajectoryFileError(f"not a number: {e}", line=lineno) from e
        if not all(np.isfinite(parsed)):
            raise TrajectoryFileError("non-finite value", line=lineno)
        values.append(parsed)
    if not values:
        raise TrajectoryFileError(f"{path} has no data rows")
    return header, np.asarray(values, dtype=float)


def _columns(header: List[str], table: Array, names: Sequence[str], path: PathLike) -> Array:
    missing = [name for name in names if name not in header]
    if missing:
        raise TrajectoryFileError(f"{path}: missing columns {missing}", line=1)
    return table[:, [header.index(name) for name in names]]


def _check_grid(times: Array, path: PathLike) -> float:
    if times.size < 2:
        raise TrajectoryFileError(f"{path}: need at least two samples")
    steps = np.diff(times)
    bad = np.flatnonzero(steps <= 0)
    if bad.size:
        raise TrajectoryFileError("time is not strictly increasing", line=int(bad[0]) + 3)
    spacing = float(steps[0])
    uneven = np.flatnonzero(np.abs(steps - spacing) > SPACING_TOLERANCE)
    if uneven.size:
        raise TrajectoryFileError("time spacing is not uniform", line=int(uneven[0]) + 3)
    return spacing


def read_desired_csv(path: PathLike, Ts: Optional[float] = None) -> DesiredTrajectory:
    """
    Read a desired mass trajectory (t,x,y,z[,vx,vy,vz]).

    Args:
        path: CSV file with a header row
        Ts: Target spacing; the samples are linearly resampled when it differs

    Returns:
        DesiredTrajectory starting at t = 0

    Raises:
        TrajectoryFileError: On malformed content
    """
    header, table = _read_table(path)
    data = _columns(header, table, DESIRED_COLUMNS, path)
    times = data[:, 0] - data[0, 0]
    positions = data[:, 1:]
    velocities = None
    if all(name in header for name in DESIRED_VELOCITY_COLUMNS):
        velocities = _columns(header, table, DESIRED_VELOCITY_COLUMNS, path)
    spacing = _check_grid(times, path)

    if Ts is not None and abs(spacing - Ts) > SPACING_TOLERANCE:
        count = int(np.floor(times[-1] / Ts + 1e-9)) + 1
        grid = np.arange(count) * Ts
        logger.info(f"Resampling {path} from {spacing} s to {Ts} s ({count} nodes)")
        positions = np.column_stack([np.interp(grid, times, positions[:, i]) for i in range(3)])
        if velocities is not None:
            velocities = np.column_stack(
                [np.interp(grid, times, velocities[:, i]) for i in range(3)]
            )
        times = grid
    return DesiredTrajectory(times=times, positions=positions, velocities=velocities)


def write_desired_csv(path: PathLike, desired: DesiredTrajectory) -> Path:
    columns = [desired.times[:, None], desired.positions]
    header = list(DESIRED_COLUMNS)
    if desired.velocities is not None:
        columns.append(desired.velocities)
        header += DESIRED_VELOCITY_COLUMNS
    return _write_table(path, header, np.hstack(columns))


def write_trajectory_csv(path: PathLike, traj: Trajectory) -> Path:
    """Write t, the 10 states and the 3 held inputs per node."""
    rows = np.hstack((traj.times[:, None], traj.states, traj.inputs))
    return _write_table(path, PLAN_COLUMNS, rows)


def read_trajectory_csv(path: PathLike) -> Tuple[float, Array, Array]:
    """
    Read a plan file.

    Returns:
        (Ts, states (N+1, 10), inputs (N, 3)); the held last input row is dropped
    """
    header, table = _read_table(path)
    data = _columns(header, table, PLAN_COLUMNS, path)
    Ts = _check_grid(data[:, 0], path)
    states = data[:, 1 : 1 + STATE_DIM]
    inputs = data[:-1, 1 + STATE_DIM :]
    return Ts, states, inputs


def write_rollout_csv(path: PathLike, traj: Trajectory, forces: Array) -> Path:
    """Write a rollout with mass kinematics and container-frame forces."""
    rows = np.hstack(
        (
            traj.times[:, None],
            traj.states,
            traj.inputs,
            traj.mass_position,
            traj.mass_velocity,
            traj.mass_acceleration,
            forces,
        )
    )
    return _write_table(path, ROLLOUT_COLUMNS, rows)


def read_rollout_csv(path: PathLike) -> Trajectory:
    """Read a rollout file back into a Trajectory without recomputation."""
    header, table = _read_table(path)
    data = _columns(header, table, ROLLOUT_COLUMNS, path)
    Ts = _check_grid(data[:, 0], path)
    s = 1 + STATE_DIM
    return Trajectory(
        times=data[:, 0],
        states=data[:, 1:s],
        inputs=data[:, s : s + 3],
        mass_position=data[:, s + 3 : s + 6],
        mass_velocity=data[:, s + 6 : s + 9],
        mass_acceleration=data[:, s + 9 : s + 12],
        Ts=Ts,
        source="rollout",
    )


def is_rollout_csv(path: PathLike) -> bool:
    """True if the file header carries the rollout columns."""
    try:
        with Path(path).open(newline="") as f:
            header = next(csv.reader(f), [])
    except OSError as e:
        raise TrajectoryFileError(f"cannot read {path}: {e}") from e
    return "ax_m" in [h.strip() for h in header]


def write_joint_csv(
    path: PathLike,
    times: Array,
    q: Array,
    dq: Array,
    ddq: Array,
    tau: Optional[Array] = None,
) -> Path:
    """Write t, q1..qn, dq1..dqn, ddq1..ddqn[, tau1..taun]."""
    n = q.shape[1]
    header = ["t"]
    blocks = [times[:, None], q, dq, ddq]
    for prefix in ("q", "dq", "ddq"):
        header += [f"{prefix}{i + 1}" for i in range(n)]
    if tau is not None:
        header += [f"tau{i + 1}" for i in range(n)]
        blocks.append(tau)
    return _write_table(path, header, np.hstack(blocks))


def read_joint_csv(path: PathLike) -> Dict[str, Array]:
    """Read a joint trajectory file into arrays keyed t, q, dq, ddq and tau."""
    header, table = _read_table(path)
    n = sum(1 for h in header if h.startswith("q") and h[1:].isdigit())
    result = {"t": _columns(header, table, ["t"], path)[:, 0]}
    for prefix in ("q", "dq", "ddq", "tau"):
        names = [f"{prefix}{i + 1}" for i in range(n)]
        if prefix == "tau" and names[0] not in header:
            continue
        result[prefix] = _columns(header, table, names, path)
    return result


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_json(path: PathLike, data: Dict[str, Any]) -> Path:
    """Write a report with sorted keys; non-finite numbers become null."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")
    logger.debug(f"Wrote report {path}")
    return path


def read_json(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as e:
        raise TrajectoryFileError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise TrajectoryFileError(f"invalid JSON: {e.msg}", line=e.lineno) from e
