"""Dense two-phase revised simplex.

Works on the standard form ``min c.z  s.t.  A z = b, z >= 0`` with an
explicit basis inverse that is updated by elementary row operations and
refactored periodically. Intended for the small and medium LPs of this
package, where determinism matters more than speed: under Bland's rule the
returned vertex is a pure function of the input arrays.
"""

import numpy as np

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"
MAX_ITER = "MaxIter"

_REFACTOR_EVERY = 64


class _Tableau:
    """Basis bookkeeping for the revised method."""

    def __init__(self, A, b, basis):
        self.A = A
        self.b = b
        self.basis = list(basis)
        self.refactor()
        self.since_refactor = 0

    def refactor(self):
        B = self.A[:, self.basis]
        self.Binv = np.linalg.inv(B)
        self.xB = self.Binv @ self.b
        self.since_refactor = 0

    def pivot(self, row, col, u):
        piv = u[row]
        self.Binv[row] /= piv
        others = np.arange(len(u)) != row
        self.Binv[others] -= np.outer(u[others], self.Binv[row])
        self.basis[row] = col
        self.since_refactor += 1
        if self.since_refactor >= _REFACTOR_EVERY:
            self.refactor()
        else:
            self.xB = self.Binv @ self.b


def _run(tab, c, allowed, rule, tol, max_iter, counter):
    """Iterate until optimal for cost ``c`` over columns flagged ``allowed``."""
    while True:
        if counter[0] >= max_iter:
            return MAX_ITER
        cB = c[tab.basis]
        y = cB @ tab.Binv
        d = c - y @ tab.A
        d[tab.basis] = 0.0
        d[~allowed] = 0.0
        candidates = np.flatnonzero(d < -tol)
        if candidates.size == 0:
            return OPTIMAL
        if rule == "bland":
            q = int(candidates[0])
        else:
            q = int(candidates[np.argmin(d[candidates])])
        u = tab.Binv @ tab.A[:, q]
        rows = np.flatnonzero(u > tol)
        if rows.size == 0:
            return UNBOUNDED
        xB = np.maximum(tab.xB[rows], 0.0)
        ratios = xB / u[rows]
        best = ratios.min()
        ties = rows[ratios <= best + tol * max(1.0, abs(best))]
        if rule == "bland":
            row = int(min(ties, key=lambda r: tab.basis[r]))
        else:
            row = int(ties[np.argmax(u[ties])])
        tab.pivot(row, q, u)
        counter[0] += 1


def simplex_standard(c, A, b, rule="bland", tol=1e-9, max_iter=50000):
    """Solve ``min c.z, A z = b, z >= 0``.

    Returns ``(z, y, status, iterations)`` where ``y`` are the equality
    multipliers (derivative of the optimal value with respect to ``b``).
    Redundant equality rows get a zero multiplier.
    """
    if rule not in ("bland", "dantzig"):
        raise ValueError(f"unknown pivot rule {rule!r}")
    c = np.asarray(c, dtype=float)
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    m, n = A.shape
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0

    # phase 1 on [A | I]
    A1 = np.hstack([A, np.eye(m)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    tab = _Tableau(A1, b, range(n, n + m))
    counter = [0]
    allowed = np.ones(n + m, dtype=bool)
    status = _run(tab, c1, allowed, rule, tol, max_iter, counter)
    if status == MAX_ITER:
        return np.zeros(n), np.zeros(m), MAX_ITER, counter[0]
    infeas = float(c1[tab.basis] @ tab.xB)
    if infeas > tol * max(1.0, np.abs(b).max(initial=0.0)) * 10:
        return np.zeros(n), np.zeros(m), INFEASIBLE, counter[0]

    # drive artificials out of the basis; rows where that fails are redundant
    keep_rows = np.ones(m, dtype=bool)
    for r in range(m):
        if tab.basis[r] < n:
            continue
        row = tab.Binv[r] @ A
        row[[j for j in tab.basis if j < n]] = 0.0  # basic columns
        j = np.flatnonzero(np.abs(row) > 1e-9)
        j = j[j < n]
        if j.size:
            q = int(j[0])
            u = tab.Binv @ A1[:, q]
            tab.pivot(r, q, u)
        else:
            keep_rows[r] = False
    if not keep_rows.all():
        basis = [tab.basis[r] for r in range(m) if keep_rows[r]]
        tab = _Tableau(A[keep_rows], b[keep_rows], basis)
    else:
        tab = _Tableau(A, b, tab.basis)

    status = _run(tab, c, np.ones(n, dtype=bool), rule, tol, max_iter, counter)
    z = np.zeros(n)
    z[tab.basis] = np.maximum(tab.xB, 0.0)
    y_kept = c[tab.basis] @ tab.Binv
    y = np.zeros(m)
    y[keep_rows] = y_kept
    y[flip] *= -1.0
    return z, y, status, counter[0]
