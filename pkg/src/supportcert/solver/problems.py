"""The four convex programs: Basis Pursuit, the constrained l1 problem, its
Fenchel dual and the minimum-norm certificate program.

Polyhedral cases are linear programs; the smooth cases run the
Chambolle-Pock iteration, and every first-order answer is finished by an
identify-then-solve step whose output is accepted only when its KKT residual
is below the configured tolerance.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import lsq_linear

from ..linalg import as_matrix, as_vector
from . import lp
from .activeset import ActiveSetFailure, min_norm_active_set
from .kkt import (certificate_kkt_residual, conjugate_exponent, kkt_residual,
                  lp_norm, norm_gradient)
from .pdhg import chambolle_pock
from .prox import project_lalpha_ball, prox_power, soft_threshold

OPTIMAL = lp.OPTIMAL
INFEASIBLE = lp.INFEASIBLE
UNBOUNDED = lp.UNBOUNDED
MAX_ITER = lp.MAX_ITER


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and algorithm switches shared by every solve.

    ``lp_pivot_rule`` only affects the in-repo simplex backend.
    """

    tolerance: float = 1e-9
    max_iterations: int = 200000
    lp_pivot_rule: str = "bland"
    lp_backend: str = "highs"
    check_every: int = 50

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.lp_pivot_rule not in ("bland", "dantzig"):
            raise ValueError(f"unknown pivot rule {self.lp_pivot_rule!r}")
        if self.lp_backend not in ("highs", "simplex"):
            raise ValueError(f"unknown LP backend {self.lp_backend!r}")


DEFAULT_CONFIG = SolverConfig()


@dataclass
class SolveResult:
    primal: np.ndarray
    dual: np.ndarray = None
    objective: float = np.nan
    status: str = OPTIMAL
    kkt_residual: float = np.nan
    iterations: int = 0
    method: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.status == OPTIMAL

    def to_record(self):
        """Single-line ``key=value`` diagnostics."""
        return (f"status={self.status} objective={self.objective:.17g} "
                f"kkt_residual={self.kkt_residual:.3e} iterations={self.iterations} "
                f"method={self.method}")


def parse_alpha(alpha):
    """Accept 1, 2, inf (number or string) and general exponents >= 1."""
    if isinstance(alpha, str):
        a = alpha.strip().lower()
        if a in ("inf", "infinity", "oo"):
            return np.inf
        alpha = float(a)
    alpha = float(alpha)
    if not alpha >= 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    return alpha


def _lp(cfg, c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, free=None, backend=None,
        pivot_rule=None):
    return lp.solve_lp(c, A_ub, b_ub, A_eq, b_eq, free,
                       backend=backend or cfg.lp_backend,
                       pivot_rule=pivot_rule or cfg.lp_pivot_rule,
                       tol=min(cfg.tolerance, 1e-9),
                       max_iterations=cfg.max_iterations)


def _clean(u, tol=1e-13):
    # LP vertices may carry round-off in nonbasic positions
    u = np.array(u, dtype=float)
    u[np.abs(u) <= tol * max(1.0, np.abs(u).max(initial=0.0))] = 0.0
    return u


# -- Basis Pursuit ------------------------------------------------------------

def solve_basis_pursuit(Phi, y, cfg=DEFAULT_CONFIG):
    """``min ||x||_1  s.t.  Phi x = y`` through the split ``x = x+ - x-``."""
    Phi = as_matrix(Phi)
    y = as_vector(y)
    m, n = Phi.shape
    c = np.ones(2 * n)
    res = _lp(cfg, c, A_eq=np.hstack([Phi, -Phi]), b_eq=y)
    if res.status != OPTIMAL:
        return SolveResult(np.zeros(n), None, np.nan, res.status, np.inf, res.iterations,
                           "lp")
    x = _clean(res.x[:n] - res.x[n:])
    p = res.eq_dual
    eta = Phi.T @ p
    on = x != 0
    resid = max(np.abs(eta[on] - np.sign(x[on])).max(initial=0.0),
                max(np.abs(eta).max(initial=0.0) - 1.0, 0.0),
                np.abs(Phi @ x - y).max(initial=0.0))
    return SolveResult(x, p, float(np.abs(x).sum()), OPTIMAL, float(resid),
                       res.iterations, "lp")


# -- constrained primal ---------------------------------------------------------

def _primal_lp(Phi, y, alpha, tau, cfg):
    m, n = Phi.shape
    if np.isinf(alpha):
        # Phi x - y <= tau,  y - Phi x <= tau
        A_ub = np.block([[Phi, -Phi], [-Phi, Phi]])
        b_ub = np.concatenate([y + tau, tau - y])
        res = _lp(cfg, np.ones(2 * n), A_ub, b_ub)
    else:
        # |Phi x - y| <= r,  sum r <= tau
        Im = np.eye(m)
        A_ub = np.block([
            [Phi, -Phi, -Im],
            [-Phi, Phi, -Im],
            [np.zeros((1, 2 * n)), np.ones((1, m))],
        ])
        b_ub = np.concatenate([y, -y, [tau]])
        res = _lp(cfg, np.concatenate([np.ones(2 * n), np.zeros(m)]), A_ub, b_ub)
    if res.status != OPTIMAL:
        return res, None, None
    x = _clean(res.x[:n] - res.x[n:2 * n])
    p = _clean(res.ineq_dual[:m] - res.ineq_dual[m:2 * m])
    return res, x, p


def _nearest(M, rhs, start):
    """Least-squares solution of ``M z = rhs`` closest to ``start``."""
    return start + np.linalg.lstsq(M, rhs - M @ start, rcond=None)[0]


def _polish_primal(Phi, y, alpha, tau, x, p):
    """Recover an exact optimal pair from approximate supports.

    The supports of ``x`` and of the dual ``p`` (its saturation set when the
    dual norm is l-inf) are read off the iterate; the affine optimality
    equations restricted to them are then solved in the least-squares sense.
    """
    m, n = Phi.shape
    xs = np.abs(x)
    xi = np.flatnonzero(xs > 1e-7 * max(xs.max(initial=0.0), 1e-300))
    sx = np.sign(x[xi])
    pmax = np.abs(p).max(initial=0.0)
    xp = np.zeros(n)
    pp = np.zeros(m)
    if xi.size == 0 or pmax == 0.0:
        return None
    A = Phi[:, xi]
    if np.isinf(alpha):
        S = np.flatnonzero(np.abs(p) > 1e-7 * pmax)
        q = np.sign(p[S])
        xp[xi] = _nearest(A[S], y[S] - tau * q, x[xi])
        pp[S] = _nearest(A[S].T, sx, p[S])
    elif alpha == 1:
        Z = np.abs(p) >= pmax * (1.0 - 1e-6)
        q = np.sign(p[Z])
        Zc = np.flatnonzero(~Z)
        Zi = np.flatnonzero(Z)
        rows = np.vstack([A[Zc], q @ A[Zi]])
        rhs = np.concatenate([y[Zc], [q @ y[Zi] - tau]])
        xp[xi] = _nearest(rows, rhs, x[xi])
        # unknowns: p on Zc and the common magnitude t on Z
        M = np.hstack([A[Zc].T, (q @ A[Zi]).reshape(-1, 1)])
        sol = _nearest(M, sx, np.concatenate([p[Zc], [pmax]]))
        pp[Zc] = sol[:-1]
        pp[Zi] = sol[-1] * q
    elif alpha == 2:
        Ap = np.linalg.pinv(A)
        x_ls = Ap @ y
        r_ls = y - A @ x_ls
        try:
            d = np.linalg.solve(A.T @ A, sx)
        except np.linalg.LinAlgError:
            return None
        Ad = A @ d
        slack = tau ** 2 - r_ls @ r_ls
        if slack <= 0 or Ad @ Ad == 0:
            return None
        inv_kappa = np.sqrt(slack / (Ad @ Ad))
        xp[xi] = x_ls - d * inv_kappa
        r = r_ls + Ad * inv_kappa
        pp = r / inv_kappa
    else:
        return None
    return xp, pp


def _primal_first_order(Phi, y, alpha, tau, cfg, x0=None):
    m, n = Phi.shape
    best = {}

    def prox_fstar(z, sigma):
        # Moreau: prox of sigma f* for f = indicator of the ball B_alpha(y, tau)
        return z - sigma * (y + project_lalpha_ball(z / sigma - y, alpha, tau))

    def check(x, pcp):
        p = -pcp
        cand = _polish_primal(Phi, y, alpha, tau, x, p)
        if cand is None:
            return False
        r = kkt_residual(cand[0], cand[1], Phi, y, alpha, tau)
        if r < best.get("res", np.inf):
            best.update(res=r, x=cand[0], p=cand[1])
        return r <= cfg.tolerance

    start = np.zeros(n) if x0 is None else x0
    x, pcp, iters, converged = chambolle_pock(
        Phi, soft_threshold, prox_fstar, start, np.zeros(m), cfg.max_iterations,
        check=check, check_every=cfg.check_every)
    if "x" in best:
        xb, pb, rb = best["x"], best["p"], best["res"]
    else:
        xb, pb = x, -pcp
        rb = kkt_residual(xb, pb, Phi, y, alpha, tau)
    status = OPTIMAL if rb <= cfg.tolerance else MAX_ITER
    return SolveResult(xb, pb, float(np.abs(xb).sum()), status, float(rb), iters,
                       "first_order")


def solve_primal(Phi, y, alpha, tau, cfg=DEFAULT_CONFIG, method="auto"):
    """``min ||x||_1  s.t.  ||Phi x - y||_alpha <= tau``.

    ``method="lp"`` (alpha in {1, inf}), ``"first_order"`` (any alpha in
    {1, 2, inf}) or ``"auto"``, which picks the LP whenever it applies. The
    returned dual is scaled so that ``kkt_residual(primal, dual, ...)``
    certifies optimality.
    """
    Phi = as_matrix(Phi)
    y = as_vector(y)
    alpha = parse_alpha(alpha)
    if alpha not in (1.0, 2.0, np.inf):
        raise ValueError("solve_primal supports alpha in {1, 2, inf}")
    if tau < 0:
        raise ValueError("tau must be non-negative")
    m, n = Phi.shape
    if tau == 0:
        return solve_basis_pursuit(Phi, y, cfg)
    if lp_norm(y, alpha) <= tau:
        # zero is feasible and has the smallest possible objective
        beta = conjugate_exponent(alpha)
        p = np.zeros(m)
        return SolveResult(np.zeros(n), p, 0.0, OPTIMAL,
                           kkt_residual(np.zeros(n), p, Phi, y, alpha, tau), 0, "trivial")
    if method == "auto":
        method = "first_order" if alpha == 2 else "lp"
    if method == "lp":
        if alpha == 2:
            raise ValueError("alpha=2 has no LP form")
        res, x, p = _primal_lp(Phi, y, alpha, tau, cfg)
        if x is None:
            return SolveResult(np.zeros(n), None, np.nan, res.status, np.inf,
                               res.iterations, "lp")
        return SolveResult(x, p, float(np.abs(x).sum()), OPTIMAL,
                           kkt_residual(x, p, Phi, y, alpha, tau), res.iterations, "lp")
    if method != "first_order":
        raise ValueError(f"unknown method {method!r}")
    if alpha == 2:
        x_ls = np.linalg.lstsq(Phi, y, rcond=None)[0]
        if np.linalg.norm(Phi @ x_ls - y) > tau:
            return SolveResult(np.zeros(n), None, np.nan, INFEASIBLE, np.inf, 0,
                               "first_order")
    return _primal_first_order(Phi, y, alpha, tau, cfg)


# -- Fenchel dual -----------------------------------------------------------------

def solve_dual(Phi, y, beta, tau, cfg=DEFAULT_CONFIG):
    """``min -<y, p> + tau ||p||_beta  s.t.  ||Phi^T p||_inf <= 1``.

    The returned ``dual`` field holds the primal l1 solution ``x`` recovered
    from the multipliers of the box constraint.
    """
    Phi = as_matrix(Phi)
    y = as_vector(y)
    beta = parse_alpha(beta)
    alpha = conjugate_exponent(beta)
    m, n = Phi.shape
    if not np.any(y):
        p = np.zeros(m)
        return SolveResult(p, np.zeros(n), 0.0, OPTIMAL, 0.0, 0, "trivial")
    if beta in (1.0, np.inf):
        # variables: p (free) | s (beta = 1, m entries) or t (beta = inf, scalar)
        k = m if beta == 1 else 1
        Im = np.eye(m)
        link = -np.eye(m) if beta == 1 else -np.ones((m, 1))
        A_ub = np.block([
            [Im, link],
            [-Im, link],
            [Phi.T, np.zeros((n, k))],
            [-Phi.T, np.zeros((n, k))],
        ])
        b_ub = np.concatenate([np.zeros(2 * m), np.ones(2 * n)])
        c = np.concatenate([-y, tau * np.ones(k)])
        free = np.concatenate([np.ones(m, dtype=bool), np.zeros(k, dtype=bool)])
        res = _lp(cfg, c, A_ub, b_ub, free=free)
        if res.status != OPTIMAL:
            return SolveResult(np.zeros(m), None, np.nan, res.status, np.inf,
                               res.iterations, "lp")
        p = _clean(res.x[:m])
        mu = res.ineq_dual[2 * m:]
        x = _clean(mu[n:] - mu[:n])
        obj = float(-y @ p + tau * lp_norm(p, beta))
        resid = kkt_residual(x, p, Phi, y, alpha, tau) if tau > 0 else np.nan
        return SolveResult(p, x, obj, OPTIMAL, resid, res.iterations, "lp")
    if beta != 2:
        raise ValueError("solve_dual supports beta in {1, 2, inf}")
    primal = solve_primal(Phi, y, alpha, tau, cfg)
    if primal.dual is None:
        return SolveResult(np.zeros(m), None, np.nan, primal.status, np.inf,
                           primal.iterations, primal.method)
    p = primal.dual
    obj = float(-y @ p + tau * lp_norm(p, beta))
    return SolveResult(p, primal.primal, obj, primal.status, primal.kkt_residual,
                       primal.iterations, primal.method)


# -- minimum-norm certificate -----------------------------------------------------

def _certificate_lp(Phi, I, s_I, beta, cfg, backend=None, pivot_rule=None):
    m, n = Phi.shape
    out = np.ones(n, dtype=bool)
    out[I] = False
    B = Phi[:, out].T
    k = m if beta == 1 else 1
    Im = np.eye(m)
    link = -np.eye(m) if beta == 1 else -np.ones((m, 1))
    A_ub = np.block([
        [Im, link],
        [-Im, link],
        [B, np.zeros((B.shape[0], k))],
        [-B, np.zeros((B.shape[0], k))],
    ])
    b_ub = np.concatenate([np.zeros(2 * m), np.ones(2 * B.shape[0])])
    A_eq = np.hstack([Phi[:, I].T, np.zeros((len(I), k))])
    c = np.concatenate([np.zeros(m), np.ones(k)])
    free = np.concatenate([np.ones(m, dtype=bool), np.zeros(k, dtype=bool)])
    res = _lp(cfg, c, A_ub, b_ub, A_eq, s_I, free, backend=backend, pivot_rule=pivot_rule)
    if res.status != OPTIMAL:
        return res, None, None
    p = _clean(res.x[:m])
    nb = B.shape[0]
    mu = res.ineq_dual[2 * m:]
    v = np.zeros(n)
    v[out] = mu[:nb] - mu[nb:]
    v[I] = res.eq_dual
    return res, p, v


def _certificate_first_order(Phi, I, s_I, beta, cfg, max_iterations):
    """Chambolle-Pock on ``min ||p||^beta / beta + indicator(Phi^T p in C)``."""
    m, n = Phi.shape
    in_I = np.zeros(n, dtype=bool)
    in_I[I] = True

    def project_C(eta):
        out = np.clip(eta, -1.0, 1.0)
        out[in_I] = s_I
        return out

    def prox_fstar(z, sigma):
        return z - sigma * project_C(z / sigma)

    x, u, iters, _ = chambolle_pock(
        Phi.T, lambda z, t: prox_power(z, t, beta), prox_fstar, np.zeros(m),
        np.zeros(n), max_iterations)
    return x, iters


def _vertex_certificate(Phi, I, s_I, beta, cfg, p=None):
    """Test the beta = 1 LP vertex as the beta-norm minimizer.

    When the saturated columns already pin ``p`` down (``|J| >= m``) every
    certificate program can share the vertex, which the active-set path
    cannot represent. Multipliers are fitted with the sign constraints
    outside I; returns ``(p, v, residual)`` or None.
    """
    if p is None:
        _, p, _ = _certificate_lp(Phi, I, s_I, 1.0, cfg)
        if p is None:
            return None
    eta = Phi.T @ p
    J = np.flatnonzero(np.abs(eta) >= 1.0 - 1e-9)
    if J.size == 0 or not np.any(p):
        return None
    in_I = np.isin(J, I)
    # v_J = D z with z free on I and z >= 0 on the excess, v_j sign(eta_j) <= 0
    D = np.where(in_I, 1.0, -np.sign(eta[J]))
    lower = np.where(in_I, -np.inf, 0.0)
    fit = lsq_linear(Phi[:, J] * D, norm_gradient(p, beta), bounds=(lower, np.inf),
                     tol=1e-14, lsmr_tol="auto")
    v = np.zeros(Phi.shape[1])
    v[J] = D * fit.x
    return p, v, certificate_kkt_residual(p, v, Phi, I, s_I, beta)


def solve_min_norm_certificate(Phi, I, s_I, beta, cfg=DEFAULT_CONFIG, method="auto",
                               warm_start=None, known_feasible=False):
    """``min ||p||_beta  s.t.  Phi_I^T p = s_I,  ||Phi^T p||_inf <= 1``.

    beta in {1, inf}: linear program, the returned vertex is the certificate.
    Other beta > 1: feasibility is settled by the beta = 1 LP, then the
    active-set method gives the exact optimum; ``method="first_order"``
    warm-starts the active set from a Chambolle-Pock run instead of from I.
    Status ``Infeasible`` means the certificate set is empty. ``dual`` holds
    the multiplier vector ``v`` with ``Phi v`` in the subdifferential of the
    norm at ``p``. ``warm_start`` is an optional certificate for a nearby
    beta whose saturated columns seed the active set. ``known_feasible``
    skips the feasibility LP when the certificate set is already known to be
    nonempty.
    """
    Phi = as_matrix(Phi)
    I = np.asarray(sorted(int(i) for i in I), dtype=int)
    s_I = np.asarray(s_I, dtype=float)
    if I.size == 0:
        raise ValueError("support I must be nonempty")
    if s_I.shape != I.shape or not np.all(np.abs(s_I) == 1):
        raise ValueError("s_I must be a +-1 vector matching I")
    beta = parse_alpha(beta)
    m, n = Phi.shape
    if beta in (1.0, np.inf):
        res, p, v = _certificate_lp(Phi, I, s_I, beta, cfg)
        if p is None:
            return SolveResult(np.zeros(m), None, np.nan, res.status, np.inf,
                               res.iterations, "lp")
        resid = certificate_kkt_residual(p, v, Phi, I, s_I, beta)
        return SolveResult(p, v, lp_norm(p, beta), OPTIMAL, resid, res.iterations, "lp")
    # feasibility of the certificate set does not depend on beta
    iters = 0
    p1 = np.zeros(m)
    if not known_feasible:
        res, p1, _ = _certificate_lp(Phi, I, s_I, 1.0, cfg)
        if p1 is None:
            return SolveResult(np.zeros(m), None, np.nan, res.status, np.inf,
                               res.iterations, "lp")
        iters = res.iterations
    active = signs = p_start = None
    used = "active_set"
    if warm_start is not None and method == "auto":
        p_start = np.asarray(warm_start, dtype=float)
        eta = Phi.T @ p_start
        active = np.flatnonzero(np.abs(eta) >= 1.0 - 1e-9)
        signs = np.sign(eta[active])
    if method == "first_order":
        budget = min(cfg.max_iterations, 20000)
        p_fo, it_fo = _certificate_first_order(Phi, I, s_I, beta, cfg, budget)
        iters += it_fo
        eta = Phi.T @ p_fo
        active = np.flatnonzero(np.abs(eta) >= 1.0 - 1e-4)
        signs = np.sign(eta[active])
        used = "first_order+active_set"
    elif method != "auto":
        raise ValueError(f"unknown method {method!r}")
    try:
        p, v, outer = min_norm_active_set(Phi, I, s_I, beta, tol=1e-10,
                                          active=active, signs=signs,
                                          p_start=p_start)
    except ActiveSetFailure as exc:
        if p_start is not None:
            # a poor warm start can trap the Newton path; start cold
            return solve_min_norm_certificate(Phi, I, s_I, beta, cfg, method,
                                              known_feasible=True)
        if method == "auto":
            vertex = _vertex_certificate(Phi, I, s_I, beta, cfg,
                                         None if known_feasible else p1)
            if vertex is not None and vertex[2] <= cfg.tolerance:
                p, v, resid = vertex
                return SolveResult(p, v, lp_norm(p, beta), OPTIMAL, resid, iters,
                                   "lp_vertex")
            # retry from a first-order warm start
            return solve_min_norm_certificate(Phi, I, s_I, beta, cfg, "first_order",
                                              known_feasible=True)
        return SolveResult(p1, None, np.nan, MAX_ITER, np.inf, iters, used,
                           extra={"failure": str(exc)})
    resid = certificate_kkt_residual(p, v, Phi, I, s_I, beta)
    if resid > cfg.tolerance and p_start is not None:
        return solve_min_norm_certificate(Phi, I, s_I, beta, cfg, method,
                                          known_feasible=True)
    status = OPTIMAL if resid <= cfg.tolerance else MAX_ITER
    return SolveResult(p, v, lp_norm(p, beta), status, resid, iters + outer, used)
