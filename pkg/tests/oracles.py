"""
Dense reference implementations the sparse code is checked against.
"""

import numpy as np
from scipy import linalg
from scipy.optimize import nnls


def dense_qp(problem):
    """
    Exact minimizer of a QPProblem by dense linear algebra.

    Equalities are eliminated through a null-space basis; the remaining
    strictly convex inequality-constrained problem is rewritten as a least
    distance problem and solved with non-negative least squares.

    Returns:
        chi, or None when the constraints admit no point
    """
    H = problem.H.toarray()
    g = problem.g
    A_eq = problem.A_eq.toarray()
    chi_p = np.linalg.lstsq(A_eq, problem.b_eq, rcond=None)[0]
    if np.max(np.abs(A_eq @ chi_p - problem.b_eq), initial=0.0) > 1e-9:
        return None
    Z = linalg.null_space(A_eq)

    Hr = Z.T @ H @ Z
    gr = Z.T @ (H @ chi_p - g)
    L = np.linalg.cholesky(0.5 * (Hr + Hr.T))

    # rows G w <= h from both sides of every finite bound
    A_in = problem.A_in.toarray()
    G_rows, h_rows = [], []
    for row, lo, hi in zip(A_in, problem.lower, problem.upper):
        base = float(row @ chi_p)
        reduced = row @ Z
        if np.isfinite(hi):
            G_rows.append(reduced)
            h_rows.append(hi - base)
        if np.isfinite(lo):
            G_rows.append(-reduced)
            h_rows.append(base - lo)

    d = linalg.solve_triangular(L, gr, lower=True)
    if not G_rows:
        v = np.zeros_like(d)
    else:
        G = np.array(G_rows)
        h = np.array(h_rows)
        # w = L^-T (v - d) turns the cost into |v|^2 / 2
        E = linalg.solve_triangular(L, G.T, lower=True).T
        f = h + E @ d
        n = E.shape[1]
        M = np.vstack((-E.T, -f[None, :]))
        target = np.zeros(n + 1)
        target[-1] = 1.0
        u, _ = nnls(M, target, maxiter=50 * M.shape[1])
        r = M @ u - target
        if np.linalg.norm(r) < 1e-12:
            return None
        v = -r[:n] / r[n]
    w = linalg.solve_triangular(L.T, v - d, lower=False)
    return chi_p + Z @ w


def tracking_cost(chi, layout, model, desired):
    states = layout.states(chi)
    outputs = states @ model.C.T + model.output_offset
    return 0.5 * float(np.sum((outputs - desired) ** 2))
