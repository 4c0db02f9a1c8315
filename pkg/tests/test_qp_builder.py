import numpy as np
import pytest
from scipy import sparse

from spillfree.exceptions import ConfigError, InvalidStateError, TrajectoryFileError
from spillfree.linear_model import build_discrete
from spillfree.pendulum import PendulumParams
from spillfree.qp_builder import (
    DecisionLayout,
    TrajectorySpec,
    assemble,
    build_box_constraints,
    build_boundary_constraints,
    build_cost,
    build_dynamics_constraints,
    build_jerk_constraints,
    dump_problem,
    load_problem,
)

from oracles import tracking_cost


def ramp_desired(N, Ts, l=0.6):
    t = np.arange(N + 1) * Ts
    positions = np.column_stack((0.1 * t, 0.05 * t**2, np.full_like(t, -l)))
    velocities = np.column_stack((np.full_like(t, 0.1), 0.1 * t, np.zeros_like(t)))
    return np.hstack((positions, velocities))


@pytest.fixture
def spec():
    return TrajectorySpec(desired=ramp_desired(5, 0.033), Ts=0.033)


class TestLayout:
    def test_sizes(self):
        layout = DecisionLayout(4)
        assert layout.n_state_vars == 50
        assert layout.total == 62
        assert layout.state_index(4) == slice(40, 50)
        assert layout.input_index(0) == slice(50, 53)

    def test_pack_unpack(self, rng):
        layout = DecisionLayout(3)
        states, inputs = rng.normal(size=(4, 10)), rng.normal(size=(3, 3))
        chi = layout.pack(states, inputs)
        np.testing.assert_array_equal(layout.states(chi), states)
        np.testing.assert_array_equal(layout.inputs(chi), inputs)

    def test_index_out_of_range(self):
        with pytest.raises(IndexError):
            DecisionLayout(3).input_index(3)


class TestSpec:
    def test_rejects_single_node(self):
        with pytest.raises(InvalidStateError):
            TrajectorySpec(desired=np.zeros((1, 6)), Ts=0.033)

    def test_rejects_bad_sample_time(self):
        with pytest.raises(ConfigError):
            TrajectorySpec(desired=np.zeros((3, 6)), Ts=0.0)

    def test_waypoint_outside_horizon(self):
        with pytest.raises(ConfigError):
            TrajectorySpec(desired=np.zeros((3, 6)), Ts=0.033, waypoints={5: (0.0, 0.0, 0.0)})

    def test_from_positions_differentiates(self):
        positions = np.column_stack((np.arange(4) * 0.1, np.zeros(4), np.zeros(4)))
        spec = TrajectorySpec.from_positions(positions, 0.1)
        np.testing.assert_allclose(spec.desired[:, 3], 1.0)

    def test_scalar_bounds_broadcast(self):
        spec = TrajectorySpec(desired=np.zeros((3, 6)), Ts=0.033, input_lower=-2.0, input_upper=2.0)
        np.testing.assert_array_equal(spec.input_upper, [2.0, 2.0, 2.0])
        assert np.all(np.isinf(spec.state_upper))


class TestCost:
    def test_structure(self, model, spec):
        H, g = build_cost(model, spec)
        layout = spec.layout
        assert H.shape == (layout.total, layout.total)
        CtC = model.C.T @ model.C
        dense = H.toarray()
        np.testing.assert_allclose(dense[layout.state_index(2), layout.state_index(2)], CtC)
        np.testing.assert_array_equal(dense[layout.n_state_vars :, :], 0.0)
        assert np.min(np.linalg.eigvalsh(dense)) > -1e-12
        assert g.shape == (layout.total,)

    def test_objective_plus_dropped_constant_is_tracking_cost(self, model, spec, rng):
        problem = assemble(model, spec)
        constant = spec.dropped_constant(model)
        for _ in range(3):
            chi = rng.normal(size=problem.n)
            full = tracking_cost(chi, problem.layout, model, spec.desired)
            assert np.isclose(problem.objective(chi) + constant, full, rtol=1e-10, atol=1e-10)


class TestConstraints:
    def test_dynamics_rows_hold_for_rollouts(self, model, rng):
        layout = DecisionLayout(6)
        block = build_dynamics_constraints(model, layout)
        assert block.rows == 60
        assert block.is_equality

        inputs = rng.normal(size=(6, 3))
        states = np.empty((7, 10))
        states[0] = rng.normal(size=10)
        for k in range(6):
            states[k + 1] = model.step(states[k], inputs[k])
        np.testing.assert_allclose(block.matrix @ layout.pack(states, inputs), 0.0, atol=1e-12)

    def test_dynamics_need_an_interval(self, model):
        with pytest.raises(InvalidStateError):
            build_dynamics_constraints(model, DecisionLayout(0))

    def test_unbounded_box_is_vacuous(self, spec):
        block = build_box_constraints(spec, spec.layout)
        assert block.rows == spec.layout.total
        assert np.all(np.isinf(block.lower)) and np.all(np.isinf(block.upper))

    def test_box_rejects_crossed_bounds(self):
        spec = TrajectorySpec(desired=np.zeros((3, 6)), Ts=0.033, state_lower=1.0, state_upper=0.0)
        with pytest.raises(ConfigError):
            build_box_constraints(spec, spec.layout)

    def test_jerk_rows(self, spec):
        spec.jerk_lower = np.full(3, -5.0)
        spec.jerk_upper = np.full(3, 5.0)
        layout = spec.layout
        block = build_jerk_constraints(spec, layout)
        assert block.rows == 3 * (layout.N - 1)

        inputs = np.zeros((layout.N, 3))
        inputs[2] = [1.0, 2.0, 3.0]
        chi = layout.pack(np.zeros((layout.N + 1, 10)), inputs)
        jerk = (block.matrix @ chi).reshape(-1, 3)
        np.testing.assert_allclose(jerk[1], np.array([1.0, 2.0, 3.0]) / spec.Ts)
        np.testing.assert_allclose(jerk[2], -np.array([1.0, 2.0, 3.0]) / spec.Ts)

    def test_jerk_empty_for_single_interval(self):
        spec = TrajectorySpec(desired=np.zeros((2, 6)), Ts=0.033, jerk_lower=-1.0, jerk_upper=1.0)
        assert build_jerk_constraints(spec, spec.layout).rows == 0

    def test_jerk_rejects_crossed_bounds(self):
        spec = TrajectorySpec(desired=np.zeros((3, 6)), Ts=0.033, jerk_lower=1.0, jerk_upper=-1.0)
        with pytest.raises(ConfigError):
            build_jerk_constraints(spec, spec.layout)

    @pytest.mark.parametrize(
        "N,pins,rows",
        [
            (5, dict(), 26),
            (1, dict(), 23),
            (5, dict(rest_to_rest=False), 12),
            (5, dict(pin_end=False), 13),
            (5, dict(pin_start=False, pin_end=False), 0),
        ],
    )
    def test_boundary_row_count(self, model, N, pins, rows):
        spec = TrajectorySpec(desired=ramp_desired(N, 0.033), Ts=0.033, **pins)
        assert build_boundary_constraints(model, spec).rows == rows

    def test_waypoints_add_position_rows(self, model):
        spec = TrajectorySpec(desired=ramp_desired(5, 0.033), Ts=0.033, waypoints={2: (0.1, 0.0, -0.5)})
        block = build_boundary_constraints(model, spec)
        assert block.rows == 29
        np.testing.assert_allclose(block.lower[-3:], [0.1, 0.0, 0.1])

    def test_boundary_targets_mass_output(self, model, spec):
        block = build_boundary_constraints(model, spec)
        layout = spec.layout
        # a state with the pivot right above the desired start and no tilt satisfies the start rows
        states = np.zeros((layout.N + 1, 10))
        states[0, :3] = spec.desired[0, :3] + [0.0, 0.0, 0.6]
        chi = layout.pack(states, np.zeros((layout.N, 3)))
        np.testing.assert_allclose((block.matrix @ chi)[:10], block.lower[:10], atol=1e-15)


class TestAssemble:
    def test_row_groups(self, model, spec):
        spec.jerk_lower = np.full(3, -100.0)
        spec.jerk_upper = np.full(3, 100.0)
        problem = assemble(model, spec)
        assert problem.row_groups == [("dynamics", 50), ("boundary", 26), ("box", 75), ("jerk", 12)]
        assert problem.m_eq == 76
        assert problem.m_in == 87
        A, lower, upper = problem.stacked()
        assert A.shape == (163, 75)
        np.testing.assert_array_equal(lower[:76], upper[:76])

    def test_sample_time_mismatch(self, spec):
        other = build_discrete(PendulumParams(rod_length=0.6), 0.05)
        with pytest.raises(InvalidStateError):
            assemble(other, spec)


class TestDump:
    def test_load_reproduces_problem(self, model, spec, tmp_path):
        spec.input_lower = np.full(3, -3.0)
        spec.input_upper = np.full(3, 3.0)
        problem = assemble(model, spec)
        path = dump_problem(problem, tmp_path / "problem.qp")
        loaded = load_problem(path)
        assert loaded.layout == problem.layout
        assert loaded.row_groups == problem.row_groups
        for name in ("H", "A_eq", "A_in"):
            assert abs(getattr(loaded, name) - getattr(problem, name)).max() == 0.0
        for name in ("g", "b_eq", "lower", "upper"):
            np.testing.assert_array_equal(getattr(loaded, name), getattr(problem, name))

    def test_missing_header(self, tmp_path):
        path = tmp_path / "bad.qp"
        path.write_text("not a dump\n")
        with pytest.raises(TrajectoryFileError) as excinfo:
            load_problem(path)
        assert excinfo.value.line == 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(TrajectoryFileError):
            load_problem(tmp_path / "absent.qp")

    def test_sparse_types(self, model, spec):
        problem = assemble(model, spec)
        assert sparse.issparse(problem.H) and sparse.issparse(problem.A_eq)
