"""Optimality residuals for the constrained l1 problems and their duals."""

import numpy as np

INF = np.inf


def conjugate_exponent(alpha):
    """Hoelder conjugate ``beta`` with ``1/alpha + 1/beta = 1``."""
    alpha = float(alpha)
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    if alpha == 1:
        return INF
    if np.isinf(alpha):
        return 1.0
    return alpha / (alpha - 1.0)


def lp_norm(u, q):
    u = np.asarray(u, dtype=float)
    if u.size == 0:
        return 0.0
    if np.isinf(q):
        return float(np.abs(u).max())
    if q == 1:
        return float(np.abs(u).sum())
    if q == 2:
        return float(np.linalg.norm(u))
    a = np.abs(u)
    top = a.max()
    if top == 0.0:
        return 0.0
    return float(top * ((a / top) ** q).sum() ** (1.0 / q))


def _support(u, tol):
    return np.abs(u) > tol * max(1.0, np.abs(u).max(initial=0.0))


def subdiff_distance(r, p, beta, zero_tol=1e-10):
    """Sup-norm violation of ``r in d||p||_beta``.

    Exact distances for beta in {1, 2, inf} and smooth beta; for ``p = 0``
    the subdifferential is the unit ball of the conjugate norm and the
    returned value is the excess of that norm over 1.
    """
    r = np.asarray(r, dtype=float)
    p = np.asarray(p, dtype=float)
    pmax = np.abs(p).max(initial=0.0)
    if pmax <= zero_tol:
        return max(lp_norm(r, conjugate_exponent(beta)) - 1.0, 0.0)
    if beta == 1:
        S = np.abs(p) > zero_tol * pmax
        on = np.abs(r[S] - np.sign(p[S])).max(initial=0.0)
        off = max(np.abs(r[~S]).max(initial=0.0) - 1.0, 0.0)
        return float(max(on, off))
    if np.isinf(beta):
        Z = np.abs(p) >= pmax * (1.0 - zero_tol)
        q = np.sign(p[Z])
        off = np.abs(r[~Z]).max(initial=0.0)
        mass = abs(float(r[Z] @ q) - 1.0)
        wrong_sign = np.maximum(-r[Z] * q, 0.0).max(initial=0.0)
        return float(max(off, mass, wrong_sign))
    grad = norm_gradient(p, beta)
    return float(np.abs(r - grad).max(initial=0.0))


def norm_gradient(p, beta):
    """Gradient of ``||p||_beta`` at ``p != 0`` for ``1 < beta < inf``."""
    nrm = lp_norm(p, beta)
    if beta == 2:
        return p / nrm
    return np.sign(p) * (np.abs(p) / nrm) ** (beta - 1.0)


def kkt_residual(x, p, Phi, y, alpha, tau, zero_tol=1e-10):
    """Largest violation of the primal-dual optimality system.

    ``(x, p)`` is optimal for ``min ||x||_1 s.t. ||Phi x - y||_alpha <= tau``
    and its dual when

    (a) ``Phi[:, supp x]^T p = sign(x[supp x])``,
    (b) ``||Phi^T p||_inf <= 1``,
    (c) ``(y - Phi x) / tau`` lies in the subdifferential of ``||.||_beta`` at p.

    The maximum of the three violations is returned.
    """
    if tau <= 0:
        raise ValueError("kkt_residual needs tau > 0")
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    beta = conjugate_exponent(alpha)
    eta = Phi.T @ p
    on = _support(x, zero_tol)
    res_a = np.abs(eta[on] - np.sign(x[on])).max(initial=0.0)
    res_b = max(np.abs(eta).max(initial=0.0) - 1.0, 0.0)
    res_c = subdiff_distance((y - Phi @ x) / tau, p, beta, zero_tol)
    return float(max(res_a, res_b, res_c))


def certificate_kkt_residual(p, v, Phi, I, s_I, beta, zero_tol=1e-10):
    """Optimality violation for the minimum-norm certificate program.

    ``p`` must satisfy ``Phi[:, I]^T p = s_I`` and ``||Phi^T p||_inf <= 1``;
    the multiplier ``v`` must satisfy ``Phi v in d||p||_beta``, vanish off the
    saturated columns and carry the sign opposite to ``Phi^T p`` outside I.
    """
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    I = np.asarray(I, dtype=int)
    eta = Phi.T @ p
    feas_eq = np.abs(eta[I] - s_I).max(initial=0.0)
    feas_box = max(np.abs(eta).max(initial=0.0) - 1.0, 0.0)
    stat = subdiff_distance(Phi @ v, p, beta, zero_tol)
    outside = np.ones(eta.size, dtype=bool)
    outside[I] = False
    slack = np.maximum(1.0 - np.abs(eta[outside]), 0.0)
    comp = (np.abs(v[outside]) * slack).max(initial=0.0)
    sign = np.maximum(v[outside] * eta[outside], 0.0).max(initial=0.0)
    return float(max(feas_eq, feas_box, stat, comp, sign))
