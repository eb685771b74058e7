"""Linear programs in inequality/equality form with two interchangeable backends.

``solve_lp`` accepts

    min c.x   s.t.   A_ub x <= b_ub,   A_eq x = b_eq,   x_j >= 0 unless free[j]

and returns the primal point together with the constraint multipliers in
the ``d(objective)/d(rhs)`` convention (non-positive for ``<=`` rows).

``backend="highs"`` calls the HiGHS dual simplex shipped with SciPy;
``backend="simplex"`` runs the in-repo revised simplex with Bland's or
Dantzig's rule. Both return basic (vertex) solutions.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from . import simplex

OPTIMAL = simplex.OPTIMAL
INFEASIBLE = simplex.INFEASIBLE
UNBOUNDED = simplex.UNBOUNDED
MAX_ITER = simplex.MAX_ITER

_UNKNOWN = "Unknown"
_HIGHS_STATUS = {0: OPTIMAL, 1: MAX_ITER, 2: INFEASIBLE, 3: UNBOUNDED, 4: _UNKNOWN}


@dataclass
class LPResult:
    x: np.ndarray
    ineq_dual: np.ndarray
    eq_dual: np.ndarray
    objective: float
    status: str
    iterations: int


def _blank(A, n):
    if A is None:
        return np.zeros((0, n))
    return np.atleast_2d(np.asarray(A, dtype=float))


def solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, free=None,
             backend="highs", pivot_rule="bland", tol=1e-9, max_iterations=200000):
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = _blank(A_ub, n)
    A_eq = _blank(A_eq, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    free = np.zeros(n, dtype=bool) if free is None else np.asarray(free, dtype=bool)
    if backend == "highs":
        res = None
        for presolve in (True, False):
            res = _solve_highs(c, A_ub, b_ub, A_eq, b_eq, free, tol, max_iterations,
                               presolve)
            if res.status != _UNKNOWN:
                return res
        # HiGHS could not conclude; the exact simplex settles it
        return _solve_simplex(c, A_ub, b_ub, A_eq, b_eq, free, pivot_rule, tol,
                              max_iterations)
    if backend == "simplex":
        return _solve_simplex(c, A_ub, b_ub, A_eq, b_eq, free, pivot_rule, tol,
                              max_iterations)
    raise ValueError(f"unknown LP backend {backend!r}")


def _solve_highs(c, A_ub, b_ub, A_eq, b_eq, free, tol, max_iterations, presolve=True):
    bounds = [(None, None) if f else (0, None) for f in free]
    # HiGHS refuses tolerances below 1e-10
    htol = max(tol, 1e-10)
    res = linprog(
        c,
        A_ub=A_ub if A_ub.shape[0] else None,
        b_ub=b_ub if A_ub.shape[0] else None,
        A_eq=A_eq if A_eq.shape[0] else None,
        b_eq=b_eq if A_eq.shape[0] else None,
        bounds=bounds,
        method="highs-ds",
        options={
            "primal_feasibility_tolerance": htol,
            "dual_feasibility_tolerance": htol,
            "maxiter": max_iterations,
            "presolve": presolve,
        },
    )
    status = _HIGHS_STATUS.get(res.status, MAX_ITER)
    n = c.size
    if status != OPTIMAL:
        return LPResult(np.zeros(n), np.zeros(A_ub.shape[0]), np.zeros(A_eq.shape[0]),
                        np.nan, status, int(res.nit or 0))
    ineq = res.ineqlin.marginals if A_ub.shape[0] else np.zeros(0)
    eq = res.eqlin.marginals if A_eq.shape[0] else np.zeros(0)
    return LPResult(np.asarray(res.x, dtype=float), np.asarray(ineq, dtype=float),
                    np.asarray(eq, dtype=float), float(res.fun), status, int(res.nit))


def _solve_simplex(c, A_ub, b_ub, A_eq, b_eq, free, rule, tol, max_iterations):
    n = c.size
    n_ub, n_eq = A_ub.shape[0], A_eq.shape[0]
    free_idx = np.flatnonzero(free)
    # columns: x (n) | negative parts of free vars | slacks of <= rows
    A = np.zeros((n_ub + n_eq, n + free_idx.size + n_ub))
    A[:n_ub, :n] = A_ub
    A[n_ub:, :n] = A_eq
    A[:n_ub, n:n + free_idx.size] = -A_ub[:, free_idx]
    A[n_ub:, n:n + free_idx.size] = -A_eq[:, free_idx]
    A[:n_ub, n + free_idx.size:] = np.eye(n_ub)
    cost = np.concatenate([c, -c[free_idx], np.zeros(n_ub)])
    b = np.concatenate([b_ub, b_eq])
    z, y, status, iters = simplex.simplex_standard(cost, A, b, rule=rule, tol=tol,
                                                   max_iter=max_iterations)
    if status != OPTIMAL:
        return LPResult(np.zeros(n), np.zeros(n_ub), np.zeros(n_eq), np.nan, status, iters)
    x = z[:n].copy()
    x[free_idx] -= z[n:n + free_idx.size]
    return LPResult(x, y[:n_ub], y[n_ub:], float(c @ x), status, iters)
