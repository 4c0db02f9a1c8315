#!/usr/bin/env python3
"""
Command-line driver for the slosh-free trajectory pipeline.

Commands:
    optimize      desired mass trajectory -> optimized pivot plan
    simulate      plan -> nonlinear rollout with container-frame forces
    metrics       plan or rollout -> slosh metrics JSON
    ik            plan or rollout -> joint trajectory and limits report
    demo-step     0.3 m step for rod ratios 3, 6 and 9
    demo-square   0.3 m square on the bundled 7-DoF arm

Exit codes: 0 success, 2 infeasible, 3 I/O, parse or config error,
4 numerical failure (including joint limit violations under --strict).
"""

import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import click
import numpy as np
from dotenv import load_dotenv

from .exceptions import EXIT_NUMERICAL, EXIT_OK, ConfigError, JointLimitError, SpillfreeError
from .io import (
    DesiredTrajectory,
    is_rollout_csv,
    read_desired_csv,
    read_rollout_csv,
    read_trajectory_csv,
    write_desired_csv,
    write_joint_csv,
    write_json,
    write_rollout_csv,
    write_trajectory_csv,
)
from .pendulum import validity_error
from .pipeline import evaluate, optimize, plan_trajectory, rollout, to_joint_space
from .progress import ProgressReporter
from .qp_builder import dump_problem
from .scenarios import CUBE_SIDE, DEMO_RATIOS, demo_settings, square_scenario, step_desired, step_settings
from .settings import SpillfreeSettings, environment_log_level, load_settings
from .trajectory import Trajectory

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

logger = logging.getLogger(__name__)

Job = Callable[..., Dict[str, Any]]


def configure_logging(level: str):
    """Set up stderr logging at the given level."""
    logging.basicConfig(format=LOG_FORMAT, stream=sys.stderr)
    logging.getLogger().setLevel(level)


def parse_sweep(text: str) -> Tuple[str, List[Any]]:
    """
    Parse KEY=V1,V2,... into the key and typed values.

    Raises:
        ConfigError: If the text is malformed
    """
    key, sep, raw = text.partition("=")
    key = key.strip()
    if not sep or not key or not raw.strip():
        raise ConfigError(f"sweep must look like KEY=V1,V2, got {text!r}")
    values = []
    for item in raw.split(","):
        item = item.strip()
        try:
            values.append(json.loads(item))
        except json.JSONDecodeError:
            values.append(item)
    return key, values


def settings_with(settings: SpillfreeSettings, key: str, value: Any) -> SpillfreeSettings:
    """
    Copy of settings with one (possibly dotted) key replaced.

    r and ratio select the rod as ratio times the object height, 0.1 m unless
    configured.
    """
    data = settings.model_dump(exclude_unset=True)
    if key in ("r", "ratio"):
        data.pop("rod_length", None)
        data.setdefault("object_height", CUBE_SIDE)
        data["ratio"] = value
    else:
        *parents, leaf = key.split(".")
        node = data
        for name in parents:
            node = node.setdefault(name, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot sweep {key!r}")
        node[leaf] = value
    return load_settings(None, **data)


def _read_plan_or_rollout(path: Path, settings: SpillfreeSettings) -> Trajectory:
    if is_rollout_csv(path):
        return read_rollout_csv(path)
    Ts, states, inputs = read_trajectory_csv(path)
    return plan_trajectory(states, inputs, Ts, settings.pendulum_params())


def _parse_q0(text: Optional[str], settings: SpillfreeSettings) -> Optional[np.ndarray]:
    if text:
        try:
            return np.array([float(v) for v in text.split(",")])
        except ValueError as e:
            raise ConfigError(f"invalid --q0 {text!r}: {e}") from e
    if settings.q0 is not None:
        return np.asarray(settings.q0, dtype=float)
    return None


def _write_desired(out: Path, desired: np.ndarray, Ts: float):
    times = np.arange(desired.shape[0]) * Ts
    write_desired_csv(out / "desired.csv", DesiredTrajectory(times, desired[:, :3], desired[:, 3:]))


def _write_joints(out: Path, result) -> Path:
    jt = result.joints
    write_joint_csv(out / "joints.csv", jt.times, jt.q, jt.dq, jt.ddq, jt.tau)
    return write_json(out / "limits_report.json", result.report())


def _check_limits(result, strict: bool):
    violations = result.violations
    for entry in violations[:10]:
        logger.warning(
            f"Joint {entry.joint} {entry.quantity}: peak {entry.peak:.4g} beyond {entry.limit:.4g} "
            f"from node {entry.first_violation}"
        )
    if strict and violations:
        raise JointLimitError(f"{len(violations)} joint limit violations")


# Jobs are module-level so sweeps can ship them to worker processes.


def optimize_job(settings: SpillfreeSettings, out: Path, strict: bool, desired_path: Path, dump: bool) -> Dict[str, Any]:
    desired = read_desired_csv(desired_path, Ts=settings.Ts)
    result = optimize(desired.rows(), settings)
    if dump:
        dump_problem(result.problem, out / "problem.qp")
    report = result.report()
    write_json(out / "solve_report.json", report)
    if result.trajectory is not None:
        write_trajectory_csv(out / "trajectory.csv", result.trajectory)
    result.raise_for_status()
    return report


def simulate_job(settings: SpillfreeSettings, out: Path, strict: bool, trajectory_path: Path) -> Dict[str, Any]:
    Ts, states, inputs = read_trajectory_csv(trajectory_path)
    result = rollout(states, inputs, Ts, settings.pendulum_params())
    write_rollout_csv(out / "rollout.csv", result.trajectory, result.forces)
    report = result.report()
    write_json(out / "simulate_report.json", report)
    return report


def metrics_job(settings: SpillfreeSettings, out: Path, strict: bool, trajectory_path: Path) -> Dict[str, Any]:
    traj = _read_plan_or_rollout(trajectory_path, settings)
    report = evaluate(traj, settings.pendulum_params())
    write_json(out / "metrics.json", report)
    return report


def ik_job(
    settings: SpillfreeSettings,
    out: Path,
    strict: bool,
    trajectory_path: Path,
    q0: Optional[str],
) -> Dict[str, Any]:
    traj = _read_plan_or_rollout(trajectory_path, settings)
    model = settings.robot_model()
    result = to_joint_space(
        traj,
        settings.pendulum_params(),
        model,
        q0=_parse_q0(q0, settings),
        yaw=settings.yaw,
        progress=ProgressReporter(verbose=sys.stderr.isatty()),
    )
    _write_joints(out, result)
    _check_limits(result, strict)
    return result.report()


def demo_step_job(
    settings: SpillfreeSettings, out: Path, strict: bool, ratio: Optional[float] = None
) -> Dict[str, Any]:
    """Step scenario for one ratio (settings.ratio, else 6): desired, plan, rollout and metrics."""
    if ratio is None:
        ratio = settings.ratio if settings.ratio is not None else 6.0
    scenario = step_settings(ratio, settings)
    params = scenario.pendulum_params()
    desired = step_desired(scenario)
    _write_desired(out, desired, scenario.Ts)
    write_json(out / "config.json", scenario.report())

    result = optimize(desired, scenario)
    write_json(out / "solve_report.json", result.report())
    result.raise_for_status()
    plan = result.trajectory
    write_trajectory_csv(out / "trajectory.csv", plan)

    sim = rollout(plan.states, plan.inputs[:-1], plan.Ts, params)
    write_rollout_csv(out / "rollout.csv", sim.trajectory, sim.forces)

    metrics = {
        "ratio": ratio,
        "rod_length": params.rod_length,
        "validity_error": validity_error(params.rod_length, params.object_height),
        "plan": evaluate(plan, params),
        "rollout": evaluate(sim.trajectory, params),
        "mass_position_divergence": sim.divergence,
    }
    write_json(out / "metrics.json", metrics)
    return metrics


def demo_square_job(settings: SpillfreeSettings, out: Path, strict: bool) -> Dict[str, Any]:
    """Square scenario through optimize, simulate, metrics and joint mapping."""
    scenario_settings = demo_settings(settings)
    params = scenario_settings.pendulum_params()
    model = scenario_settings.robot_model()
    scenario = square_scenario(scenario_settings, model)
    _write_desired(out, scenario.desired, scenario_settings.Ts)
    write_json(out / "config.json", scenario_settings.report())

    result = optimize(scenario.desired, scenario_settings)
    write_json(out / "solve_report.json", result.report())
    result.raise_for_status()
    plan = result.trajectory
    write_trajectory_csv(out / "trajectory.csv", plan)

    sim = rollout(plan.states, plan.inputs[:-1], plan.Ts, params)
    write_rollout_csv(out / "rollout.csv", sim.trajectory, sim.forces)
    write_json(
        out / "metrics.json",
        {"plan": evaluate(plan, params), "rollout": evaluate(sim.trajectory, params)},
    )

    joints = to_joint_space(
        plan,
        params,
        model,
        q0=scenario.q0,
        yaw=scenario_settings.yaw,
        progress=ProgressReporter(verbose=sys.stderr.isatty()),
    )
    _write_joints(out, joints)
    _check_limits(joints, strict)
    return joints.report()


def execute(job: Job, settings: SpillfreeSettings, out: Path, strict: bool, kwargs: Dict[str, Any]) -> Tuple[int, Dict[str, Any]]:
    """Run one job and translate failures into an exit code."""
    try:
        out.mkdir(parents=True, exist_ok=True)
        return EXIT_OK, job(settings, out, strict, **kwargs)
    except SpillfreeError as e:
        logger.error(f"{job.__name__} failed: {e}")
        return e.exit_code, {"error": str(e), "exit_code": e.exit_code}
    except OSError as e:
        logger.error(f"{job.__name__} failed: {e}")
        return ConfigError.exit_code, {"error": str(e), "exit_code": ConfigError.exit_code}
    except Exception as e:
        logger.error(f"{job.__name__} failed: {e}", exc_info=True)
        return EXIT_NUMERICAL, {"error": str(e), "exit_code": EXIT_NUMERICAL}


def run_sweep(job: Job, settings: SpillfreeSettings, out: Path, strict: bool, sweep: str, kwargs: Dict[str, Any]) -> int:
    """Run a job once per sweep value in worker processes; returns the worst exit code."""
    key, values = parse_sweep(sweep)
    runs = [(value, settings_with(settings, key, value), out / f"{key}={value}") for value in values]
    logger.info(f"Sweeping {key} over {values} in {len(runs)} worker processes")

    progress = ProgressReporter(verbose=sys.stderr.isatty())
    summary: Dict[str, Any] = {}
    codes = []
    with progress.track(len(runs), f"Sweep {key}", unit="runs"):
        with ProcessPoolExecutor(max_workers=min(len(runs), os.cpu_count() or 1)) as pool:
            futures = [pool.submit(execute, job, s, o, strict, kwargs) for _, s, o in runs]
            for (value, _, _), future in zip(runs, futures):
                code, report = future.result()
                codes.append(code)
                summary[str(value)] = {"exit_code": code, "report": report}
                if code == EXIT_OK:
                    progress.record_success()
                else:
                    progress.record_failure(f"{key}={value}: exit {code}")
    write_json(out / "sweep.json", {"key": key, "runs": summary})
    progress.print_summary()
    return max(codes)


def _settings_or_exit(config_path: Optional[Path]) -> SpillfreeSettings:
    try:
        settings = load_settings(config_path)
    except ConfigError as e:
        logger.error(f"Configuration failed: {e}")
        sys.exit(e.exit_code)
    configure_logging(settings.log)
    return settings


def run_command(job: Job, config_path: Optional[Path], out: Path, sweep: Optional[str], strict: bool, **kwargs):
    """Shared body of the pipeline commands."""
    settings = _settings_or_exit(config_path)
    if sweep:
        try:
            code = run_sweep(job, settings, out, strict, sweep, kwargs)
        except ConfigError as e:
            logger.error(f"Sweep failed: {e}")
            code = e.exit_code
    else:
        code, _ = execute(job, settings, out, strict, kwargs)
    sys.exit(code)


COMMON_OPTIONS = (
    click.option("--config", "config_path", type=click.Path(dir_okay=False, path_type=Path), help="JSON config file"),
    click.option("--out", "out", type=click.Path(file_okay=False, path_type=Path), default=Path("."), show_default=True, help="Output directory"),
    click.option("--sweep", default=None, help="KEY=V1,V2,... run once per value in worker processes"),
    click.option("--strict", is_flag=True, help="Fail when joint limits are violated"),
)


def common_options(func):
    for option in reversed(COMMON_OPTIONS):
        func = option(func)
    return func


@click.group()
@click.version_option(package_name="spillfree")
def cli():
    """Slosh-free trajectory generation for a pendulum-modelled liquid container."""
    load_dotenv()
    configure_logging(environment_log_level())


@cli.command("optimize")
@click.argument("desired_path", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--dump", is_flag=True, help="Also write the assembled QP to problem.qp")
@common_options
def optimize_command(desired_path, dump, config_path, out, sweep, strict):
    """Optimize a pivot trajectory for a desired mass trajectory CSV."""
    run_command(optimize_job, config_path, out, sweep, strict, desired_path=desired_path, dump=dump)


@cli.command("simulate")
@click.argument("trajectory_path", type=click.Path(dir_okay=False, path_type=Path))
@common_options
def simulate_command(trajectory_path, config_path, out, sweep, strict):
    """Replay a plan's inputs through the nonlinear pendulum."""
    run_command(simulate_job, config_path, out, sweep, strict, trajectory_path=trajectory_path)


@cli.command("metrics")
@click.argument("trajectory_path", type=click.Path(dir_okay=False, path_type=Path))
@common_options
def metrics_command(trajectory_path, config_path, out, sweep, strict):
    """Evaluate slosh-free metrics of a plan or rollout CSV."""
    run_command(metrics_job, config_path, out, sweep, strict, trajectory_path=trajectory_path)


@cli.command("ik")
@click.argument("trajectory_path", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--q0", default=None, help="Initial joints, comma separated (solved by IK if omitted)")
@common_options
def ik_command(trajectory_path, q0, config_path, out, sweep, strict):
    """Map a plan or rollout to joint space and check the arm's limits."""
    run_command(ik_job, config_path, out, sweep, strict, trajectory_path=trajectory_path, q0=q0)


@cli.command("demo-step")
@click.option("--ratio", "-r", "ratios", type=float, multiple=True, help="Rod-to-height ratio (repeatable)")
@common_options
def demo_step_command(ratios, config_path, out, sweep, strict):
    """Run the 0.3 m step scenario for each ratio and compare the metrics."""
    if sweep:
        return run_command(demo_step_job, config_path, out, sweep, strict)
    settings = _settings_or_exit(config_path)
    summary: Dict[str, Any] = {}
    codes = []
    for ratio in ratios or DEMO_RATIOS:
        code, report = execute(demo_step_job, settings, out / f"r={ratio:g}", strict, {"ratio": ratio})
        codes.append(code)
        summary[f"{ratio:g}"] = report
    write_json(out / "summary.json", {"runs": summary, "trend": step_trend(summary)})
    sys.exit(max(codes))


def step_trend(summary: Dict[str, Any]) -> Dict[str, Optional[bool]]:
    """Whether both plan error measures strictly decrease as the ratio grows."""
    runs = sorted(
        (r["ratio"], r["plan"]) for r in summary.values() if isinstance(r, dict) and "plan" in r
    )
    trend: Dict[str, Optional[bool]] = {}
    for name in ("force_alignment_error", "kinematic_error"):
        values = [plan[name] for _, plan in runs]
        trend[f"{name}_decreasing"] = (
            bool(np.all(np.diff(values) < 0)) if len(values) > 1 else None
        )
    return trend


@cli.command("demo-square")
@common_options
def demo_square_command(config_path, out, sweep, strict):
    """Run the square scenario end to end on the bundled 7-DoF arm."""
    run_command(demo_square_job, config_path, out, sweep, strict)


def main():
    cli(obj={})


if __name__ == "__main__":
    main()
