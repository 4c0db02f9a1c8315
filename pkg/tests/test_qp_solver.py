from dataclasses import replace

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import sparse

from spillfree.linear_model import build_discrete
from spillfree.pendulum import PendulumParams
from spillfree.qp_builder import DecisionLayout, QPProblem, TrajectorySpec, assemble
from spillfree.qp_solver import Residuals, SolverSettings, SolveStatus, kkt_residuals, solve
from spillfree.scenarios import minimum_jerk_segment

from oracles import dense_qp, tracking_cost


def random_instance(rng):
    """Small rest-to-rest problem with random bounds tight enough to activate some of them."""
    N = int(rng.integers(6, 13))
    l = float(rng.uniform(0.3, 0.6))
    Ts = float(rng.uniform(0.1, 0.2))
    positions = rng.normal(scale=0.01, size=(N + 1, 3)).cumsum(axis=0) + [0.0, 0.0, -l]
    desired = np.hstack((positions, np.gradient(positions, Ts, axis=0)))

    state_upper = np.full(10, np.inf)
    state_upper[3:5] = rng.uniform(0.05, 0.3)
    state_upper[5:8] = rng.uniform(0.3, 1.0)
    input_bound = rng.uniform(2.0, 6.0)
    jerk_bound = rng.uniform(50.0, 300.0)
    spec = TrajectorySpec(
        desired=desired,
        Ts=Ts,
        state_lower=-state_upper,
        state_upper=state_upper,
        input_lower=-input_bound,
        input_upper=input_bound,
        jerk_lower=-jerk_bound,
        jerk_upper=jerk_bound,
    )
    model = build_discrete(PendulumParams(rod_length=l), Ts)
    return model, spec


def step_problem(N=30, Ts=0.05, l=0.6, **kwargs):
    start = np.array([0.0, 0.0, -l])
    desired = minimum_jerk_segment(start, start + [0.1, 0.0, 0.0], N, Ts)
    model = build_discrete(PendulumParams(rod_length=l), Ts)
    spec = TrajectorySpec(desired=desired, Ts=Ts, **kwargs)
    return model, spec, assemble(model, spec)


def test_matches_dense_oracle():
    rng = np.random.default_rng(2024)
    compared = 0
    for _ in range(200):
        model, spec = random_instance(rng)
        problem = assemble(model, spec)
        expected = dense_qp(problem)
        if expected is None:
            continue
        solution = solve(problem)
        assert solution.status is SolveStatus.OPTIMAL
        np.testing.assert_allclose(solution.chi, expected, atol=1e-6)

        # the dynamics hold on the returned iterate itself
        dynamics_rows = problem.row_groups[0][1]
        residual = problem.A_eq[:dynamics_rows] @ solution.chi
        assert np.max(np.abs(residual)) <= 1e-8

        jerk = problem.A_in[problem.layout.total :] @ solution.chi
        jerk_upper = problem.upper[problem.layout.total :]
        assert np.all(np.abs(jerk) <= jerk_upper + 1e-8 * np.maximum(1.0, jerk_upper))

        compared += 1
        if compared == 50:
            break
    assert compared == 50


def test_boundary_contract():
    model, spec, problem = step_problem()
    solution = solve(problem)
    assert solution.is_optimal
    layout = problem.layout
    states, inputs = layout.states(solution.chi), layout.inputs(solution.chi)
    for k in (0, layout.N):
        y = model.output(states[k])
        np.testing.assert_allclose(y[:3], spec.desired[k, :3], atol=1e-8)
        np.testing.assert_allclose(y[3:], 0.0, atol=1e-8)
        np.testing.assert_allclose(states[k, [3, 4, 8, 9]], 0.0, atol=1e-8)
    np.testing.assert_allclose(inputs[0], 0.0, atol=1e-8)
    np.testing.assert_allclose(inputs[-1], 0.0, atol=1e-8)


def test_step_problem_is_polished():
    _, _, problem = step_problem()
    solution = solve(problem)
    assert solution.status is SolveStatus.OPTIMAL
    assert solution.polished is True
    primal, dual = kkt_residuals(problem, solution)
    assert primal <= 1e-8
    assert dual <= 1e-6


def test_waypoints_and_box_bounds_hold():
    state_upper = np.full(10, np.inf)
    state_upper[3:5] = 0.025
    state_upper[5:8] = 0.12
    model, spec, problem = step_problem(
        N=40,
        state_lower=-state_upper,
        state_upper=state_upper,
        waypoints={20: [0.05, 0.005, -0.6]},
    )
    solution = solve(problem)
    assert solution.status is SolveStatus.OPTIMAL
    states = problem.layout.states(solution.chi)
    np.testing.assert_allclose(model.output(states[20])[:3], [0.05, 0.005, -0.6], atol=1e-8)
    assert np.all(np.abs(states[:, 3:5]) <= 0.025 + 1e-8)
    assert np.all(np.abs(states[:, 5:8]) <= 0.12 + 1e-8)


def test_objective_plus_dropped_constant_is_tracking_cost():
    model, spec, problem = step_problem(input_lower=-1.0, input_upper=1.0)
    solution = solve(problem)
    assert solution.status is SolveStatus.OPTIMAL
    cost = tracking_cost(solution.chi, problem.layout, model, spec.desired)
    assert abs(solution.objective + spec.dropped_constant(model) - cost) <= 1e-9 * max(1.0, cost)


def test_optimal_means_equalities_hold_absolutely():
    # the free row carries a huge value that must not loosen the tolerance on the bounded row
    problem = small_problem(np.eye(2), [1e6, 0.0], np.eye(2), [-np.inf, -np.inf], [np.inf, -1.0])
    solution = solve(problem, SolverSettings(polish=False))
    assert solution.status is SolveStatus.OPTIMAL
    assert abs(solution.chi[1] + 1.0) <= 1e-7


def test_residuals_require_equality_rows_within_the_absolute_tolerance():
    loose = Residuals(
        primal=3e-7, equality=3e-7, dual=0.0, eps_primal=1e-5, eps_equality=1e-8, eps_dual=1e-8
    )
    assert not loose.converged
    assert loose._replace(equality=1e-9).converged


def test_kkt_residuals_of_optimal_solution():
    _, _, problem = step_problem(input_lower=-1.0, input_upper=1.0)
    solution = solve(problem)
    assert solution.status is SolveStatus.OPTIMAL
    primal, dual = kkt_residuals(problem, solution)
    assert primal < 1e-6
    assert dual < 1e-6


def test_static_desired_has_zero_cost():
    l, Ts, N = 0.6, 0.033, 20
    desired = np.tile([0.2, -0.1, 0.5 - l, 0.0, 0.0, 0.0], (N + 1, 1))
    model = build_discrete(PendulumParams(rod_length=l), Ts)
    spec = TrajectorySpec(desired=desired, Ts=Ts)
    problem = assemble(model, spec)
    solution = solve(problem)
    assert solution.is_optimal
    assert tracking_cost(solution.chi, problem.layout, model, desired) < 1e-12
    states = problem.layout.states(solution.chi)
    np.testing.assert_allclose(states[:, :3], np.tile([0.2, -0.1, 0.5], (N + 1, 1)), atol=1e-7)
    np.testing.assert_allclose(states[:, 3:], 0.0, atol=1e-7)


def test_contradictory_pins_are_primal_infeasible():
    l, Ts = 0.6, 0.033
    desired = np.array([[0.0, 0.0, -l, 0.0, 0.0, 0.0], [0.3, 0.0, -l, 0.0, 0.0, 0.0]])
    model = build_discrete(PendulumParams(rod_length=l), Ts)
    problem = assemble(model, TrajectorySpec(desired=desired, Ts=Ts))
    solution = solve(problem)
    assert solution.status is SolveStatus.PRIMAL_INFEASIBLE
    assert not solution.is_optimal


def test_unbounded_cost_is_dual_infeasible():
    layout = DecisionLayout(1)
    n = layout.total
    problem = QPProblem(
        H=sparse.csc_matrix((n, n)),
        g=np.ones(n),
        A_eq=sparse.csc_matrix((0, n)),
        b_eq=np.zeros(0),
        A_in=sparse.identity(n, format="csc"),
        lower=np.full(n, -np.inf),
        upper=np.full(n, np.inf),
        layout=layout,
    )
    assert solve(problem).status is SolveStatus.DUAL_INFEASIBLE


def small_problem(H, g, A_in, lower, upper):
    n = len(g)
    return QPProblem(
        H=sparse.csc_matrix(np.atleast_2d(H)),
        g=np.asarray(g, dtype=float),
        A_eq=sparse.csc_matrix((0, n)),
        b_eq=np.zeros(0),
        A_in=sparse.csc_matrix(np.atleast_2d(A_in)),
        lower=np.asarray(lower, dtype=float),
        upper=np.asarray(upper, dtype=float),
        layout=DecisionLayout(1),
    )


def test_unconstrained_minimizer_is_linear_term(rng):
    v = rng.normal(size=5)
    problem = small_problem(np.eye(5), v, np.eye(5), np.full(5, -np.inf), np.full(5, np.inf))
    solution = solve(problem)
    assert solution.is_optimal
    np.testing.assert_allclose(solution.chi, v, atol=1e-8)


def test_active_upper_bound_multiplier():
    # min x^2/2 - 3x subject to x <= 2
    problem = small_problem([[1.0]], [3.0], [[1.0]], [-np.inf], [2.0])
    solution = solve(problem)
    assert solution.is_optimal
    np.testing.assert_allclose(solution.chi, [2.0], atol=1e-8)
    np.testing.assert_allclose(solution.y, [1.0], atol=1e-8)
    assert max(kkt_residuals(problem, solution)) < 1e-8


def test_perturbation_grows_primal_residual():
    problem = small_problem([[1.0]], [3.0], [[2.0]], [-np.inf], [4.0])
    solution = solve(problem)
    assert solution.status is SolveStatus.OPTIMAL
    np.testing.assert_allclose(solution.chi, [2.0], atol=1e-8)
    moved = replace(solution, chi=solution.chi + 1e-3)
    primal, _ = kkt_residuals(problem, moved)
    assert abs(primal - 2e-3) < 1e-7


def test_tighter_jerk_bounds_never_lower_the_objective():
    objectives = []
    for bound in (np.inf, 20.0, 5.0):
        _, _, problem = step_problem(jerk_lower=-bound, jerk_upper=bound)
        solution = solve(problem)
        assert solution.is_optimal
        objectives.append(solution.objective)
    assert objectives[0] <= objectives[1] + 1e-9
    assert objectives[1] <= objectives[2] + 1e-9


def test_warm_start_converges_no_slower():
    _, _, problem = step_problem(input_lower=-1.0, input_upper=1.0)
    cold = solve(problem)
    warm = solve(problem, warm_start=cold)
    assert warm.is_optimal
    assert warm.iterations <= cold.iterations
    np.testing.assert_allclose(warm.chi, cold.chi, atol=1e-6)


def test_solves_are_deterministic():
    _, _, problem = step_problem(input_lower=-1.0, input_upper=1.0)
    first, second = solve(problem), solve(problem)
    assert first.status is SolveStatus.OPTIMAL
    np.testing.assert_array_equal(first.chi, second.chi)
    assert first.iterations == second.iterations


def test_iteration_limit_reported():
    _, _, problem = step_problem()
    settings = SolverSettings(max_iter=5, polish=False)
    solution = solve(problem, settings)
    assert solution.status is SolveStatus.MAX_ITER
    assert solution.iterations == 5


def test_solution_dict():
    _, _, problem = step_problem()
    report = solve(problem).to_dict()
    assert report["status"] == "Optimal"
    assert set(report) >= {"iterations", "objective", "primal_residual", "dual_residual"}


@pytest.mark.parametrize("bad", [{"alpha": 2.5}, {"rho": 0.0}, {"max_iter": 0}, {"unknown": 1}])
def test_settings_validation(bad):
    with pytest.raises(ValidationError):
        SolverSettings(**bad)
