"""Proximal maps and projections used by the first-order solvers."""

import numpy as np


def soft_threshold(z, t):
    """Prox of ``t * ||.||_1``."""
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def project_l1_ball(z, radius):
    """Euclidean projection onto ``{u : ||u||_1 <= radius}`` (sort based)."""
    a = np.abs(z)
    if a.sum() <= radius:
        return z.copy()
    if radius <= 0:
        return np.zeros_like(z)
    srt = np.sort(a)[::-1]
    css = np.cumsum(srt) - radius
    idx = np.arange(1, a.size + 1)
    rho = np.flatnonzero(srt - css / idx > 0)[-1]
    theta = css[rho] / (rho + 1.0)
    return np.sign(z) * np.maximum(a - theta, 0.0)


def project_l2_ball(z, radius):
    nrm = np.linalg.norm(z)
    if nrm <= radius:
        return z.copy()
    return z * (radius / nrm)


def project_linf_ball(z, radius):
    return np.clip(z, -radius, radius)


def project_lalpha_ball(z, alpha, radius):
    """Projection onto the l-alpha ball for ``alpha`` in {1, 2, inf}."""
    if alpha == 1:
        return project_l1_ball(z, radius)
    if alpha == 2:
        return project_l2_ball(z, radius)
    if np.isinf(alpha):
        return project_linf_ball(z, radius)
    raise ValueError(f"no closed-form projection for alpha={alpha}")


def prox_power(z, t, beta, iters=60):
    """Prox of ``t * |u|^beta / beta`` applied entrywise, ``beta > 1``.

    Solves ``u + t * u^(beta-1) = |z|`` for ``u >= 0`` by safeguarded
    Newton steps inside the bracket ``[0, |z|]``.
    """
    a = np.abs(z)
    if beta == 2:
        return z / (1.0 + t)
    lo = np.zeros_like(a)
    hi = a.copy()
    u = a / (1.0 + t)  # exact for beta = 2, a sensible start otherwise
    for _ in range(iters):
        up = np.maximum(u, 1e-300)
        f = u + t * up ** (beta - 1.0) - a
        lo = np.where(f < 0, u, lo)
        hi = np.where(f > 0, u, hi)
        df = 1.0 + t * (beta - 1.0) * up ** (beta - 2.0)
        step = u - f / df
        bad = ~((step > lo) & (step < hi))
        u_new = np.where(bad, 0.5 * (lo + hi), step)
        if np.max(np.abs(u_new - u), initial=0.0) <= 1e-15 * max(1.0, a.max(initial=0.0)):
            u = u_new
            break
        u = u_new
    return np.sign(z) * u
