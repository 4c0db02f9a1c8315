"""
Operator-splitting (ADMM) solver for the trajectory QP.

Solves::

    minimize    1/2 x' H x - g' x
    subject to  l <= A x <= u

with equalities encoded as l = u. Each iteration solves one quasi-definite KKT
system whose LDL^T factorization is computed once and refreshed only when the
penalty parameter changes. The problem is equilibrated (Ruiz) beforehand, and a
polishing step recovers a high-accuracy solution from the detected active set.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, NamedTuple, Optional, Tuple

import numpy as np
import numpy.typing as npt
import qdldl
from pydantic import BaseModel, ConfigDict, Field
from scipy import sparse

from .exceptions import InvalidStateError
from .qp_builder import QPProblem

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]

MIN_SCALING = 1e-4
MAX_SCALING = 1e4
RHO_EQ_FACTOR = 1e3
RHO_EQ_TOL = 1e-4
DIVISION_TOL = 1e-30
REFINE_TOL = 1e-14


class SolveStatus(str, Enum):
    OPTIMAL = "Optimal"
    MAX_ITER = "MaxIter"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    DUAL_INFEASIBLE = "DualInfeasible"


class Residuals(NamedTuple):
    """Optimality residuals with their tolerances, in the original space."""

    primal: float
    equality: float
    dual: float
    eps_primal: float
    eps_equality: float
    eps_dual: float

    @property
    def converged(self) -> bool:
        # equality rows are held to the absolute tolerance on their own
        return (
            self.primal <= self.eps_primal
            and self.equality <= self.eps_equality
            and self.dual <= self.eps_dual
        )


class SolverSettings(BaseModel):
    """ADMM settings."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    rho: float = Field(0.1, gt=0)
    sigma: float = Field(1e-6, gt=0)
    alpha: float = Field(1.6, gt=0, lt=2)
    eps_abs: float = Field(1e-8, gt=0)
    eps_rel: float = Field(1e-8, gt=0)
    eps_prim_inf: float = Field(1e-6, gt=0)
    eps_dual_inf: float = Field(1e-6, gt=0)
    max_iter: int = Field(20000, gt=0)
    check_termination: int = Field(10, gt=0)
    scaling: int = Field(10, ge=0)
    adaptive_rho: bool = True
    adaptive_rho_interval: int = Field(25, gt=0)
    adaptive_rho_tolerance: float = Field(5.0, gt=1)
    rho_min: float = Field(1e-6, gt=0)
    rho_max: float = Field(1e6, gt=0)
    polish: bool = True
    polish_trigger: float = Field(1e-4, gt=0)
    polish_refine_iter: int = Field(50, ge=0)
    delta: float = Field(1e-7, gt=0)


@dataclass(frozen=True)
class Solution:
    """Result of one solve, in the original (unscaled) problem space."""

    chi: Array
    y: Array
    status: SolveStatus
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float
    m_eq: int = 0
    polished: bool = False
    rho: float = 0.0

    @property
    def is_optimal(self) -> bool:
        return self.status is SolveStatus.OPTIMAL

    @property
    def y_eq(self) -> Array:
        return self.y[: self.m_eq]

    @property
    def y_in(self) -> Array:
        return self.y[self.m_eq :]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": self.status.value,
            "iterations": self.iterations,
            "objective": self.objective,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "polished": self.polished,
            "rho": self.rho,
        }


def _inf_norm(v: Array) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


def _col_norms(M: sparse.spmatrix) -> Array:
    if M.shape[0] == 0 or M.nnz == 0:
        return np.zeros(M.shape[1])
    return abs(M).max(axis=0).toarray().ravel()


def _limit_scaling(norms: Array) -> Array:
    norms = np.asarray(norms, dtype=float).copy()
    norms[norms < MIN_SCALING] = 1.0
    return np.minimum(norms, MAX_SCALING)


def _kkt_matrix(P: sparse.spmatrix, A: sparse.spmatrix, reg: float, dual_diag: Optional[Array]) -> sparse.csc_matrix:
    n, m = P.shape[0], A.shape[0]
    top_left = P + reg * sparse.identity(n, format="csc")
    if m == 0:
        return sparse.csc_matrix(top_left)
    bottom_right = None if dual_diag is None else sparse.diags(-dual_diag, format="csc")
    return sparse.bmat([[top_left, A.T], [A, bottom_right]], format="csc")


class ADMMSolver:
    """Single-problem ADMM workspace."""

    def __init__(self, problem: QPProblem, settings: Optional[SolverSettings] = None):
        """
        Scale the problem and factor the initial KKT matrix.

        Args:
            problem: Assembled QP
            settings: Solver settings (defaults when omitted)
        """
        self.logger = logging.getLogger(self.__class__.__name__)
        self.problem = problem
        self.settings = settings or SolverSettings()

        A, lower, upper = problem.stacked()
        if A.shape[1] != problem.n or problem.g.shape != (problem.n,):
            raise InvalidStateError("QP dimensions are inconsistent")
        self.n, self.m = problem.n, A.shape[0]

        # original data, q = -g
        self._P0 = sparse.csc_matrix(problem.H)
        self._q0 = -np.asarray(problem.g, dtype=float)
        self._A0 = sparse.csc_matrix(A)
        self._l0 = lower
        self._u0 = upper

        self._scale()
        self._eq_rows = (self.u - self.l) < RHO_EQ_TOL
        self._free_rows = np.isinf(self.l) & np.isinf(self.u)

        self.rho = float(self.settings.rho)
        self._rho_vec = self._rho_vector(self.rho)
        self._kkt = qdldl.Solver(_kkt_matrix(self.P, self.A, self.settings.sigma, 1.0 / self._rho_vec))

        self.x = np.zeros(self.n)
        self.z = np.zeros(self.m)
        self.y = np.zeros(self.m)

    def _scale(self):
        # Ruiz equilibration of [[P, A'], [A, 0]] plus cost scaling
        P, q, A = self._P0.copy(), self._q0.copy(), self._A0.copy()
        D = np.ones(self.n)
        E = np.ones(self.m)
        c = 1.0
        for _ in range(self.settings.scaling):
            d_temp = 1.0 / np.sqrt(_limit_scaling(np.maximum(_col_norms(P), _col_norms(A))))
            e_temp = 1.0 / np.sqrt(_limit_scaling(_col_norms(A.T.tocsc())))
            Dm = sparse.diags(d_temp)
            P = sparse.csc_matrix(Dm @ P @ Dm)
            if self.m:
                A = sparse.csc_matrix(sparse.diags(e_temp) @ A @ Dm)
            q = d_temp * q
            D *= d_temp
            E *= e_temp

            cost = max(float(np.mean(_col_norms(P))), _inf_norm(q))
            c_temp = 1.0 / float(_limit_scaling(np.array([cost]))[0])
            P = P * c_temp
            q = q * c_temp
            c *= c_temp

        self.P, self.q, self.A = sparse.csc_matrix(P), q, sparse.csc_matrix(A)
        self.D, self.E, self.c = D, E, c
        self.Dinv, self.Einv = 1.0 / D, 1.0 / E
        self.l = E * self._l0
        self.u = E * self._u0

    def _rho_vector(self, rho: float) -> Array:
        vec = np.full(self.m, rho)
        vec[self._eq_rows] = rho * RHO_EQ_FACTOR
        vec[self._free_rows] = self.settings.rho_min
        return vec

    def _update_rho(self, rho: float):
        self.rho = rho
        self._rho_vec = self._rho_vector(rho)
        self._kkt.update(_kkt_matrix(self.P, self.A, self.settings.sigma, 1.0 / self._rho_vec))

    def warm_start(self, chi: Optional[npt.ArrayLike] = None, y: Optional[npt.ArrayLike] = None):
        """
        Seed the iterates from a previous solution in the original space.

        Args:
            chi: Primal guess
            y: Dual guess for the stacked constraints
        """
        if chi is not None:
            chi = np.asarray(chi, dtype=float)
            if chi.shape != (self.n,):
                raise InvalidStateError(f"warm start primal must have {self.n} entries")
            self.x = self.Dinv * chi
            self.z = self.A @ self.x
        if y is not None:
            y = np.asarray(y, dtype=float)
            if y.shape != (self.m,):
                raise InvalidStateError(f"warm start dual must have {self.m} entries")
            self.y = self.c * self.Einv * y

    def _unscaled(self, x: Array, y: Array) -> Tuple[Array, Array]:
        return self.D * x, self.E * y / self.c

    def _residuals(self, x: Array, z: Array, y: Array) -> Residuals:
        Ax = self.Einv * (self.A @ x)
        z = self.Einv * z
        Px = self.P @ x
        Aty = self.A.T @ y
        s = self.settings
        gap = Ax - z
        bounded = ~self._free_rows
        dual = _inf_norm(self.Dinv * (Px + self.q + Aty)) / self.c
        eps_prim = s.eps_abs + s.eps_rel * max(_inf_norm(Ax[bounded]), _inf_norm(z[bounded]))
        eps_dual = s.eps_abs + s.eps_rel * max(
            _inf_norm(self.Dinv * Px), _inf_norm(self.Dinv * Aty), _inf_norm(self.Dinv * self.q)
        ) / self.c
        return Residuals(
            _inf_norm(gap), _inf_norm(gap[self._eq_rows]), dual, eps_prim, s.eps_abs, eps_dual
        )

    def _rho_estimate(self, x: Array, z: Array, y: Array) -> float:
        Ax = self.A @ x
        Px = self.P @ x
        Aty = self.A.T @ y
        prim = _inf_norm(Ax - z) / (max(_inf_norm(Ax), _inf_norm(z)) + DIVISION_TOL)
        dual = _inf_norm(Px + self.q + Aty) / (
            max(_inf_norm(Px), _inf_norm(Aty), _inf_norm(self.q)) + DIVISION_TOL
        )
        estimate = self.rho * math.sqrt(prim / (dual + DIVISION_TOL))
        return float(np.clip(estimate, self.settings.rho_min, self.settings.rho_max))

    def _is_primal_infeasible(self, dy: Array) -> bool:
        dy = self.E * dy
        # project onto the polar of the recession cone of [l, u]
        upper_inf = np.isinf(self._u0)
        lower_inf = np.isinf(self._l0)
        dy = np.where(upper_inf & lower_inf, 0.0, dy)
        dy = np.where(upper_inf & ~lower_inf, np.minimum(dy, 0.0), dy)
        dy = np.where(lower_inf & ~upper_inf, np.maximum(dy, 0.0), dy)
        norm = _inf_norm(dy)
        if norm <= DIVISION_TOL:
            return False
        u_fin = np.where(upper_inf, 0.0, self._u0)
        l_fin = np.where(lower_inf, 0.0, self._l0)
        support = float(u_fin @ np.maximum(dy, 0.0) + l_fin @ np.minimum(dy, 0.0))
        if support >= -self.settings.eps_prim_inf * norm:
            return False
        return _inf_norm(self._A0.T @ dy) < self.settings.eps_prim_inf * norm

    def _is_dual_infeasible(self, dx: Array) -> bool:
        dx = self.D * dx
        norm = _inf_norm(dx)
        if norm <= DIVISION_TOL:
            return False
        eps = self.settings.eps_dual_inf * norm
        if float(self._q0 @ dx) >= -eps:
            return False
        if _inf_norm(self._P0 @ dx) >= eps:
            return False
        Adx = self._A0 @ dx
        upper_ok = np.isinf(self._u0) | (Adx <= eps)
        lower_ok = np.isinf(self._l0) | (Adx >= -eps)
        return bool(np.all(upper_ok & lower_ok))

    def _original_residuals(self, chi: Array, y: Array) -> Residuals:
        s = self.settings
        Ax = self._A0 @ chi
        proj = np.clip(Ax, self._l0, self._u0)
        Px = self._P0 @ chi
        Aty = self._A0.T @ y
        gap = Ax - proj
        bounded = ~self._free_rows
        dual = _inf_norm(Px + self._q0 + Aty)
        eps_prim = s.eps_abs + s.eps_rel * max(_inf_norm(Ax[bounded]), _inf_norm(proj[bounded]))
        eps_dual = s.eps_abs + s.eps_rel * max(_inf_norm(Px), _inf_norm(Aty), _inf_norm(self._q0))
        return Residuals(
            _inf_norm(gap), _inf_norm(gap[self._eq_rows]), dual, eps_prim, s.eps_abs, eps_dual
        )

    def _refine(self, factor: qdldl.Solver, K_true: sparse.csc_matrix, rhs: Array) -> Array:
        # iterative refinement against the unregularized KKT matrix; keeps the best iterate
        sol = factor.solve(rhs)
        best = sol
        best_norm = _inf_norm(rhs - K_true @ sol)
        tol = REFINE_TOL * (1.0 + _inf_norm(rhs))
        for _ in range(self.settings.polish_refine_iter):
            if best_norm <= tol:
                break
            sol = sol + factor.solve(rhs - K_true @ sol)
            norm = _inf_norm(rhs - K_true @ sol)
            if not math.isfinite(norm):
                break
            if norm < best_norm:
                best, best_norm = sol, norm
        return best

    def _polish(self, x: Array, z: Array, y: Array) -> Optional[Tuple[Array, Array, Residuals]]:
        """
        Solve the equality-constrained QP on the guessed active set.

        Returns:
            (chi, y, residuals) in the original space, or None when the
            reduced KKT system cannot be solved or the multiplier signs
            contradict the guessed active set
        """
        s = self.settings
        lower_active = self._eq_rows | (z - self.l < -y)
        upper_active = ~lower_active & (self.u - z < y)
        idx = np.flatnonzero(lower_active | upper_active)
        A_act = sparse.csc_matrix(self.A.tocsr()[idx])
        target = np.where(lower_active[idx], self.l[idx], self.u[idx])

        K_reg = _kkt_matrix(self.P, A_act, s.delta, np.full(idx.size, s.delta))
        K_true = _kkt_matrix(self.P, A_act, 0.0, None)
        rhs = np.concatenate((-self.q, target))
        try:
            factor = qdldl.Solver(K_reg)
        except Exception as e:
            self.logger.debug(f"Polish factorization failed: {e}")
            return None
        sol = self._refine(factor, K_true, rhs)
        if not np.all(np.isfinite(sol)):
            return None

        y_scaled = np.zeros(self.m)
        y_scaled[idx] = sol[self.n :]
        chi, y_orig = self._unscaled(sol[: self.n], y_scaled)
        residuals = self._original_residuals(chi, y_orig)

        inequality = ~self._eq_rows
        wrong_sign = (lower_active & inequality & (y_orig > residuals.eps_dual)) | (
            upper_active & inequality & (y_orig < -residuals.eps_dual)
        )
        if np.any(wrong_sign):
            self.logger.debug("Polish rejected: multiplier sign mismatch on the active set")
            return None
        if not residuals.converged:
            self.logger.debug(
                f"Polished point outside tolerance: prim={residuals.primal:.3e} "
                f"eq={residuals.equality:.3e} dual={residuals.dual:.3e}"
            )
        return chi, y_orig, residuals

    def _solution(self, chi: Array, y: Array, status: SolveStatus, iterations: int, prim: float, dual: float, polished: bool) -> Solution:
        return Solution(
            chi=chi,
            y=y,
            status=status,
            iterations=iterations,
            primal_residual=float(prim),
            dual_residual=float(dual),
            objective=self.problem.objective(chi),
            m_eq=self.problem.m_eq,
            polished=polished,
            rho=self.rho,
        )

    def solve(self) -> Solution:
        """
        Run ADMM until convergence, infeasibility detection or max_iter.

        Returns:
            Solution in the original problem space
        """
        s = self.settings
        x, z, y = self.x.copy(), self.z.copy(), self.y.copy()
        status: Optional[SolveStatus] = None
        next_polish = s.polish_trigger
        prim = dual = math.inf
        it = 0

        for it in range(1, s.max_iter + 1):
            x_prev, z_prev, y_prev = x, z, y
            rhs = np.concatenate((s.sigma * x_prev - self.q, z_prev - y_prev / self._rho_vec))
            sol = self._kkt.solve(rhs)
            x_tilde = sol[: self.n]
            z_tilde = z_prev + (sol[self.n :] - y_prev) / self._rho_vec

            x = s.alpha * x_tilde + (1.0 - s.alpha) * x_prev
            z_relaxed = s.alpha * z_tilde + (1.0 - s.alpha) * z_prev
            z = np.clip(z_relaxed + y_prev / self._rho_vec, self.l, self.u)
            y = y_prev + self._rho_vec * (z_relaxed - z)

            if it % s.check_termination == 0 or it == s.max_iter:
                residuals = self._residuals(x, z, y)
                prim, dual = residuals.primal, residuals.dual
                self.logger.debug(
                    f"iter {it}: prim={prim:.3e} eq={residuals.equality:.3e} "
                    f"dual={dual:.3e} rho={self.rho:.3e}"
                )
                if residuals.converged:
                    status = SolveStatus.OPTIMAL
                    break
                if self._is_primal_infeasible(y - y_prev):
                    status = SolveStatus.PRIMAL_INFEASIBLE
                    break
                if self._is_dual_infeasible(x - x_prev):
                    status = SolveStatus.DUAL_INFEASIBLE
                    break
                if s.polish and max(prim, dual) < next_polish:
                    polished = self._polish(x, z, y)
                    if polished is not None and polished[2].converged:
                        self.x, self.z, self.y = x, z, y
                        self.logger.info(f"Solved (polished) in {it} iterations")
                        return self._polished_solution(polished, SolveStatus.OPTIMAL, it)
                    next_polish = max(prim, dual) / 10.0

            if s.adaptive_rho and it % s.adaptive_rho_interval == 0:
                estimate = self._rho_estimate(x, z, y)
                if estimate > self.rho * s.adaptive_rho_tolerance or estimate < self.rho / s.adaptive_rho_tolerance:
                    self.logger.debug(f"Updating rho {self.rho:.3e} -> {estimate:.3e}")
                    self._update_rho(estimate)

        self.x, self.z, self.y = x, z, y
        if status is None:
            status = SolveStatus.MAX_ITER

        if status in (SolveStatus.PRIMAL_INFEASIBLE, SolveStatus.DUAL_INFEASIBLE):
            self.logger.info(f"Problem reported {status.value} after {it} iterations")
            chi, y_orig = self._unscaled(x, y - y_prev)
            return self._solution(chi, y_orig, status, it, prim, dual, False)

        chi, y_orig = self._unscaled(x, y)
        if s.polish:
            polished = self._polish(x, z, y)
            if polished is not None and polished[2].converged:
                self.logger.info(f"Solved (polished) in {it} iterations")
                return self._polished_solution(polished, SolveStatus.OPTIMAL, it)
            if polished is not None and status is SolveStatus.MAX_ITER:
                # out of iterations: keep the polished point when it beats the iterate on both residuals
                iterate = self._original_residuals(chi, y_orig)
                if polished[2].primal <= iterate.primal and polished[2].dual <= iterate.dual:
                    self.logger.warning(f"Iteration limit reached after {it} iterations; returning the polished point")
                    return self._polished_solution(polished, status, it)

        self.logger.info(f"ADMM finished with status {status.value} after {it} iterations")
        return self._solution(chi, y_orig, status, it, prim, dual, False)

    def _polished_solution(self, polished: Tuple[Array, Array, Residuals], status: SolveStatus, iterations: int) -> Solution:
        chi, y, residuals = polished
        return self._solution(chi, y, status, iterations, residuals.primal, residuals.dual, True)


def solve(
    problem: QPProblem,
    settings: Optional[SolverSettings] = None,
    warm_start: Optional[Solution] = None,
) -> Solution:
    """
    Solve a QP with a fresh ADMM workspace.

    Args:
        problem: Assembled QP
        settings: Solver settings
        warm_start: Previous solution of a same-shaped problem

    Returns:
        Solution with status, iterate and residuals
    """
    solver = ADMMSolver(problem, settings)
    if warm_start is not None:
        solver.warm_start(warm_start.chi, warm_start.y)
    return solver.solve()


def kkt_residuals(problem: QPProblem, solution: Solution) -> Tuple[float, float]:
    """
    Recompute optimality residuals from scratch.

    Returns:
        (primal, dual) with primal = |A chi - proj_[l,u](A chi)|_inf and
        dual = |H chi - g + A' y|_inf
    """
    A, lower, upper = problem.stacked()
    chi = np.asarray(solution.chi, dtype=float)
    y = np.asarray(solution.y, dtype=float)
    Ax = A @ chi
    primal = _inf_norm(Ax - np.clip(Ax, lower, upper))
    dual = _inf_norm(problem.H @ chi - problem.g + A.T @ y)
    return primal, dual
