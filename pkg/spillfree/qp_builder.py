"""
Assembly of the trajectory quadratic program.

The decision vector stacks all node states followed by all inputs::

    chi = [x_0, ..., x_N, u_0, ..., u_{N-1}]

and the problem reads::

    minimize    1/2 chi' H chi - g' chi
    subject to  A_eq chi = b_eq
                lower <= A_in chi <= upper

Constraint rows are emitted in a fixed order: dynamics, boundary (pins and
waypoints), box, jerk.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt
from scipy import sparse

from .exceptions import ConfigError, InvalidStateError, TrajectoryFileError
from .linear_model import OUTPUT_DIM, DiscreteModel
from .pendulum import DPHI, DTHETA, INPUT_DIM, PHI, STATE_DIM, THETA

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]

REST_ROWS = (THETA, PHI, DTHETA, DPHI)
DUMP_MAGIC = "%%spillfree-qp 1"


@dataclass(frozen=True)
class DecisionLayout:
    """Index bookkeeping for the stacked decision vector."""

    N: int
    state_dim: int = STATE_DIM
    input_dim: int = INPUT_DIM

    def __post_init__(self):
        if self.N < 0:
            raise InvalidStateError(f"node count must be non-negative, got {self.N}")

    @property
    def n_state_vars(self) -> int:
        return self.state_dim * (self.N + 1)

    @property
    def total(self) -> int:
        return self.n_state_vars + self.input_dim * self.N

    def state_index(self, k: int) -> slice:
        if not 0 <= k <= self.N:
            raise IndexError(f"state node {k} outside 0..{self.N}")
        start = self.state_dim * k
        return slice(start, start + self.state_dim)

    def input_index(self, k: int) -> slice:
        if not 0 <= k < self.N:
            raise IndexError(f"input node {k} outside 0..{self.N - 1}")
        start = self.n_state_vars + self.input_dim * k
        return slice(start, start + self.input_dim)

    def states(self, chi: npt.ArrayLike) -> Array:
        return np.asarray(chi, dtype=float)[: self.n_state_vars].reshape(self.N + 1, self.state_dim)

    def inputs(self, chi: npt.ArrayLike) -> Array:
        return np.asarray(chi, dtype=float)[self.n_state_vars :].reshape(self.N, self.input_dim)

    def pack(self, states: npt.ArrayLike, inputs: npt.ArrayLike) -> Array:
        states = np.asarray(states, dtype=float)
        inputs = np.asarray(inputs, dtype=float)
        if states.shape != (self.N + 1, self.state_dim) or inputs.shape != (self.N, self.input_dim):
            raise InvalidStateError(
                f"cannot pack states {states.shape} and inputs {inputs.shape} for N={self.N}"
            )
        return np.concatenate((states.ravel(), inputs.ravel()))


def _bound_vector(value: Optional[npt.ArrayLike], size: int, default: float, name: str) -> Array:
    if value is None:
        return np.full(size, default)
    vec = np.broadcast_to(np.asarray(value, dtype=float), (size,)).copy()
    if np.any(np.isnan(vec)):
        raise ConfigError(f"{name} contains NaN")
    return vec


@dataclass
class TrajectorySpec:
    """
    Desired mass trajectory and the constraints of one optimization.

    desired holds N+1 rows of [x, y, z, vx, vy, vz] targets for the mass. Bound
    vectors apply to every node; missing bounds are unbounded.
    """

    desired: Array
    Ts: float
    state_lower: Optional[Array] = None
    state_upper: Optional[Array] = None
    input_lower: Optional[Array] = None
    input_upper: Optional[Array] = None
    jerk_lower: Optional[Array] = None
    jerk_upper: Optional[Array] = None
    pin_start: bool = True
    pin_end: bool = True
    rest_to_rest: bool = True
    waypoints: Dict[int, Array] = field(default_factory=dict)

    def __post_init__(self):
        self.desired = np.asarray(self.desired, dtype=float)
        if self.desired.ndim != 2 or self.desired.shape[1] != OUTPUT_DIM:
            raise InvalidStateError(
                f"desired trajectory must have {OUTPUT_DIM} columns, got shape {self.desired.shape}"
            )
        if self.desired.shape[0] < 2:
            raise InvalidStateError("desired trajectory needs at least two nodes")
        if not np.all(np.isfinite(self.desired)):
            raise InvalidStateError("desired trajectory has non-finite entries")
        if not self.Ts > 0:
            raise ConfigError(f"Ts must be positive, got {self.Ts}")

        self.state_lower = _bound_vector(self.state_lower, STATE_DIM, -np.inf, "state_lower")
        self.state_upper = _bound_vector(self.state_upper, STATE_DIM, np.inf, "state_upper")
        self.input_lower = _bound_vector(self.input_lower, INPUT_DIM, -np.inf, "input_lower")
        self.input_upper = _bound_vector(self.input_upper, INPUT_DIM, np.inf, "input_upper")
        self.jerk_lower = _bound_vector(self.jerk_lower, INPUT_DIM, -np.inf, "jerk_lower")
        self.jerk_upper = _bound_vector(self.jerk_upper, INPUT_DIM, np.inf, "jerk_upper")

        self.waypoints = {
            int(k): np.asarray(p, dtype=float).reshape(3) for k, p in self.waypoints.items()
        }
        for k in self.waypoints:
            if not 0 <= k <= self.N:
                raise ConfigError(f"waypoint node {k} outside 0..{self.N}")

    @property
    def N(self) -> int:
        return self.desired.shape[0] - 1

    @property
    def layout(self) -> DecisionLayout:
        return DecisionLayout(self.N)

    @property
    def times(self) -> Array:
        return np.arange(self.N + 1) * self.Ts

    @classmethod
    def from_positions(cls, positions: npt.ArrayLike, Ts: float, **kwargs) -> "TrajectorySpec":
        """
        Build a spec from desired mass positions only.

        Velocity targets are central differences of the positions (one-sided at
        the ends).
        """
        positions = np.asarray(positions, dtype=float)
        if positions.ndim != 2 or positions.shape[1] != 3 or positions.shape[0] < 2:
            raise InvalidStateError(f"positions must be (N+1, 3), got {positions.shape}")
        velocities = np.gradient(positions, Ts, axis=0)
        return cls(desired=np.hstack((positions, velocities)), Ts=Ts, **kwargs)

    def dropped_constant(self, model: DiscreteModel) -> float:
        """The 1/2 |y_d - offset|^2 term omitted from the quadratic cost."""
        shifted = self.desired - model.output_offset
        return 0.5 * float(np.sum(shifted**2))


@dataclass(frozen=True)
class ConstraintBlock:
    """A group of constraint rows lower <= matrix chi <= upper."""

    name: str
    matrix: sparse.csr_matrix
    lower: Array
    upper: Array

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_equality(self) -> bool:
        return bool(np.array_equal(self.lower, self.upper))


@dataclass
class QPProblem:
    """Sparse QP in standard form with row-group bookkeeping."""

    H: sparse.csc_matrix
    g: Array
    A_eq: sparse.csc_matrix
    b_eq: Array
    A_in: sparse.csc_matrix
    lower: Array
    upper: Array
    layout: DecisionLayout
    row_groups: List[Tuple[str, int]] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def m_eq(self) -> int:
        return self.A_eq.shape[0]

    @property
    def m_in(self) -> int:
        return self.A_in.shape[0]

    def stacked(self) -> Tuple[sparse.csc_matrix, Array, Array]:
        """Combined constraint set l <= A chi <= u with equalities first."""
        A = sparse.vstack((self.A_eq, self.A_in), format="csc")
        lower = np.concatenate((self.b_eq, self.lower))
        upper = np.concatenate((self.b_eq, self.upper))
        return A, lower, upper

    def objective(self, chi: npt.ArrayLike) -> float:
        chi = np.asarray(chi, dtype=float)
        return float(0.5 * chi @ (self.H @ chi) - self.g @ chi)


def _rows(matrix, lower, upper, name: str) -> ConstraintBlock:
    return ConstraintBlock(
        name=name,
        matrix=sparse.csr_matrix(matrix),
        lower=np.asarray(lower, dtype=float),
        upper=np.asarray(upper, dtype=float),
    )


def build_cost(model: DiscreteModel, spec: TrajectorySpec) -> Tuple[sparse.csc_matrix, Array]:
    """
    Quadratic tracking cost of the linearized mass output.

    Args:
        model: Discrete model providing C and the output offset
        spec: Trajectory spec with N+1 desired rows

    Returns:
        (H, g) with H = blockdiag(C'C, ..., C'C, 0) and g_k = C'(y_d,k - offset)
    """
    N = spec.N
    if model.C.shape != (OUTPUT_DIM, STATE_DIM):
        raise InvalidStateError(f"output matrix must be {OUTPUT_DIM}x{STATE_DIM}")
    CtC = sparse.csr_matrix(model.C.T @ model.C)
    H = sparse.block_diag(
        (sparse.kron(sparse.identity(N + 1), CtC), sparse.csr_matrix((INPUT_DIM * N, INPUT_DIM * N))),
        format="csc",
    )
    H.eliminate_zeros()

    shifted = spec.desired - model.output_offset
    g = np.concatenate(((shifted @ model.C).ravel(), np.zeros(INPUT_DIM * N)))
    return H, g


def build_dynamics_constraints(model: DiscreteModel, layout: DecisionLayout) -> ConstraintBlock:
    """10N rows of A x_k + B u_k - x_{k+1} = 0."""
    N = layout.N
    if N < 1:
        raise InvalidStateError("dynamics constraints need at least one interval")
    shift = sparse.eye(N, N + 1, format="csr")
    next_shift = sparse.eye(N, N + 1, k=1, format="csr")
    state_part = sparse.kron(shift, sparse.csr_matrix(model.A)) - sparse.kron(
        next_shift, sparse.identity(STATE_DIM)
    )
    input_part = sparse.kron(sparse.identity(N), sparse.csr_matrix(model.B))
    matrix = sparse.hstack((state_part, input_part), format="csr")
    matrix.eliminate_zeros()
    zeros = np.zeros(STATE_DIM * N)
    return _rows(matrix, zeros, zeros, "dynamics")


def build_box_constraints(spec: TrajectorySpec, layout: DecisionLayout) -> ConstraintBlock:
    """Identity rows bounding every entry of chi; unbounded entries carry +/-inf."""
    lower = np.concatenate((np.tile(spec.state_lower, layout.N + 1), np.tile(spec.input_lower, layout.N)))
    upper = np.concatenate((np.tile(spec.state_upper, layout.N + 1), np.tile(spec.input_upper, layout.N)))
    bad = np.flatnonzero(lower > upper)
    if bad.size:
        raise ConfigError(f"lower bound exceeds upper bound at decision entry {int(bad[0])}")
    return _rows(sparse.identity(layout.total, format="csr"), lower, upper, "box")


def build_jerk_constraints(spec: TrajectorySpec, layout: DecisionLayout) -> ConstraintBlock:
    """
    3(N-1) rows of jerk_lower <= (u_{k+1} - u_k)/Ts <= jerk_upper.

    Returns an empty block for N < 2.
    """
    if np.any(spec.jerk_lower > spec.jerk_upper):
        raise ConfigError("jerk lower bound exceeds upper bound")
    count = max(layout.N - 1, 0)
    matrix = sparse.lil_matrix((INPUT_DIM * count, layout.total))
    if count:
        diff = (sparse.eye(count, layout.N, k=1) - sparse.eye(count, layout.N)) / spec.Ts
        block = sparse.kron(diff, sparse.identity(INPUT_DIM))
        matrix = sparse.hstack(
            (sparse.csr_matrix((INPUT_DIM * count, layout.n_state_vars)), block), format="csr"
        )
    return _rows(matrix, np.tile(spec.jerk_lower, count), np.tile(spec.jerk_upper, count), "jerk")


def build_boundary_constraints(model: DiscreteModel, spec: TrajectorySpec) -> ConstraintBlock:
    """
    Equality rows for pinned endpoints and waypoints.

    A pinned endpoint matches the desired mass position with zero mass
    velocity. With rest_to_rest the tilt angles and their rates are pinned to
    zero as well, and the first/last input is pinned to zero. Waypoints pin the
    mass position only.
    """
    layout = spec.layout
    N = layout.N
    triplets: List[Tuple[int, int, float]] = []
    rhs: List[float] = []

    def add_output_rows(k: int, targets: Array, rows: Sequence[int]):
        base = layout.state_index(k).start
        for r in rows:
            row = len(rhs)
            for j in np.flatnonzero(model.C[r]):
                triplets.append((row, base + int(j), float(model.C[r, j])))
            rhs.append(float(targets[r] - model.output_offset[r]))

    def add_identity_rows(columns: Sequence[int]):
        for col in columns:
            triplets.append((len(rhs), int(col), 1.0))
            rhs.append(0.0)

    pinned_inputs = set()
    for k, pinned, u_node in ((0, spec.pin_start, 0), (N, spec.pin_end, N - 1)):
        if not pinned:
            continue
        targets = np.concatenate((spec.desired[k, :3], np.zeros(3)))
        add_output_rows(k, targets, range(OUTPUT_DIM))
        if spec.rest_to_rest:
            base = layout.state_index(k).start
            add_identity_rows([base + i for i in REST_ROWS])
            if u_node not in pinned_inputs:
                pinned_inputs.add(u_node)
                add_identity_rows(range(layout.input_index(u_node).start, layout.input_index(u_node).stop))

    for k in sorted(spec.waypoints):
        targets = np.concatenate((spec.waypoints[k], np.zeros(3)))
        add_output_rows(k, targets, range(3))

    matrix = sparse.coo_matrix(
        (
            [v for _, _, v in triplets],
            ([r for r, _, _ in triplets], [c for _, c, _ in triplets]),
        ),
        shape=(len(rhs), layout.total),
    )
    b = np.asarray(rhs)
    return _rows(matrix, b, b, "boundary")


def assemble(model: DiscreteModel, spec: TrajectorySpec) -> QPProblem:
    """
    Build the full QP for one trajectory spec.

    Args:
        model: Discrete model; its Ts must equal spec.Ts
        spec: Trajectory spec

    Returns:
        QPProblem with rows ordered dynamics, boundary, box, jerk
    """
    if not math.isclose(model.Ts, spec.Ts, rel_tol=1e-12, abs_tol=1e-15):
        raise InvalidStateError(f"model Ts {model.Ts} does not match spec Ts {spec.Ts}")
    layout = spec.layout
    H, g = build_cost(model, spec)

    equalities = [build_dynamics_constraints(model, layout), build_boundary_constraints(model, spec)]
    inequalities = [build_box_constraints(spec, layout), build_jerk_constraints(spec, layout)]

    problem = QPProblem(
        H=H,
        g=g,
        A_eq=sparse.vstack([b.matrix for b in equalities], format="csc"),
        b_eq=np.concatenate([b.lower for b in equalities]),
        A_in=sparse.vstack([b.matrix for b in inequalities], format="csc"),
        lower=np.concatenate([b.lower for b in inequalities]),
        upper=np.concatenate([b.upper for b in inequalities]),
        layout=layout,
        row_groups=[(b.name, b.rows) for b in equalities + inequalities],
    )
    logger.info(
        f"Assembled QP: n={problem.n}, m_eq={problem.m_eq}, m_in={problem.m_in}, nnz(H)={problem.H.nnz}"
    )
    return problem


def _write_matrix(lines: List[str], name: str, matrix: sparse.spmatrix):
    coo = sparse.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    lines.append(f"%section {name} {coo.shape[0]} {coo.shape[1]} {coo.nnz}")
    for idx in order:
        lines.append(f"{coo.row[idx] + 1} {coo.col[idx] + 1} {coo.data[idx]:.17g}")


def _write_vector(lines: List[str], name: str, vector: Array):
    lines.append(f"%section {name} {vector.size}")
    lines.extend(f"{v:.17g}" for v in vector)


def dump_problem(problem: QPProblem, path: Union[str, Path]) -> Path:
    """
    Export a problem as a self-describing text file.

    Matrices are written as 1-based "row col value" triplets in row-major
    order; vectors one value per line. Infinite bounds are written as inf/-inf.
    """
    lines = [DUMP_MAGIC, f"%layout N {problem.layout.N}"]
    _write_matrix(lines, "H", problem.H)
    _write_vector(lines, "g", problem.g)
    _write_matrix(lines, "A_eq", problem.A_eq)
    _write_vector(lines, "b_eq", problem.b_eq)
    _write_matrix(lines, "A_in", problem.A_in)
    _write_vector(lines, "lower", problem.lower)
    _write_vector(lines, "upper", problem.upper)
    lines.append("%groups " + " ".join(f"{name}:{rows}" for name, rows in problem.row_groups))

    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    logger.info(f"Wrote QP dump to {path}")
    return path


def load_problem(path: Union[str, Path]) -> QPProblem:
    """
    Read a problem written by dump_problem.

    Raises:
        TrajectoryFileError: On malformed content, with the offending line
    """
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise TrajectoryFileError(f"cannot read {path}: {e}") from e
    if not lines or lines[0].strip() != DUMP_MAGIC:
        raise TrajectoryFileError("missing QP dump header", line=1)

    sections: Dict[str, Union[sparse.csc_matrix, Array]] = {}
    groups: List[Tuple[str, int]] = []
    N: Optional[int] = None
    i = 1
    try:
        while i < len(lines):
            parts = lines[i].split()
            if not parts:
                i += 1
                continue
            if parts[0] == "%layout":
                N = int(parts[2])
                i += 1
            elif parts[0] == "%groups":
                groups = [(name, int(rows)) for name, rows in (p.split(":") for p in parts[1:])]
                i += 1
            elif parts[0] == "%section" and len(parts) == 5:
                name, rows, cols, nnz = parts[1], int(parts[2]), int(parts[3]), int(parts[4])
                entries = [lines[j].split() for j in range(i + 1, i + 1 + nnz)]
                if len(entries) != nnz or any(len(e) != 3 for e in entries):
                    raise TrajectoryFileError(f"truncated matrix section {name}", line=i + 1)
                r = [int(e[0]) - 1 for e in entries]
                c = [int(e[1]) - 1 for e in entries]
                v = [float(e[2]) for e in entries]
                sections[name] = sparse.csc_matrix((v, (r, c)), shape=(rows, cols))
                i += 1 + nnz
            elif parts[0] == "%section" and len(parts) == 3:
                name, size = parts[1], int(parts[2])
                values = [float(lines[j]) for j in range(i + 1, min(i + 1 + size, len(lines)))]
                if len(values) != size:
                    raise TrajectoryFileError(f"truncated vector section {name}", line=i + 1)
                sections[name] = np.asarray(values)
                i += 1 + size
            else:
                raise TrajectoryFileError(f"unexpected content {lines[i]!r}", line=i + 1)
    except (ValueError, IndexError) as e:
        raise TrajectoryFileError(f"malformed QP dump: {e}", line=i + 1) from e

    missing = {"H", "g", "A_eq", "b_eq", "A_in", "lower", "upper"} - sections.keys()
    if missing or N is None:
        raise TrajectoryFileError(f"QP dump is missing sections: {sorted(missing) or ['layout']}")

    problem = QPProblem(
        H=sections["H"],
        g=sections["g"],
        A_eq=sections["A_eq"],
        b_eq=sections["b_eq"],
        A_in=sections["A_in"],
        lower=sections["lower"],
        upper=sections["upper"],
        layout=DecisionLayout(N),
        row_groups=groups,
    )
    if problem.layout.total != problem.n or problem.g.size != problem.n:
        raise TrajectoryFileError("QP dump dimensions are inconsistent with its layout")
    return problem
