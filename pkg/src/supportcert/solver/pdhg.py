"""Chambolle-Pock primal-dual splitting for ``min_x g(x) + f(K x)``.

The iteration is the over-relaxed form

    p+ = prox_{sigma f*}(p + sigma K xbar)
    x+ = prox_{tau g}(x - tau K^T p+)
    xbar = x+ + theta (x+ - x)

with ``tau * sigma * ||K||^2 < 1``. The operator norm comes from a power
method on ``K^T K``.
"""

import numpy as np


def operator_norm(K, iters=100, seed=0):
    """Power-method estimate of the spectral norm of ``K``, padded by 1%."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(K.shape[1])
    v /= np.linalg.norm(v)
    s = 0.0
    for _ in range(iters):
        w = K.T @ (K @ v)
        s_new = np.linalg.norm(w)
        if s_new == 0.0:
            return 0.0
        v = w / s_new
        if abs(s_new - s) <= 1e-10 * s_new:
            s = s_new
            break
        s = s_new
    return 1.01 * np.sqrt(s)


def chambolle_pock(K, prox_g, prox_fstar, x0, p0, max_iter, check=None,
                   check_every=100, theta=1.0, ratio=1.0):
    """Run the iteration and return ``(x, p, iterations, converged)``.

    ``prox_g(z, tau)`` and ``prox_fstar(z, sigma)`` are the proximal maps.
    ``check(x, p)`` is called every ``check_every`` iterations and stops the
    loop when it returns True. ``ratio`` scales the primal step against the
    dual step while keeping their product fixed.
    """
    L = operator_norm(K)
    if L == 0.0:
        L = 1.0
    tau = 0.99 * ratio / L
    sigma = 0.99 / (ratio * L)
    x = np.array(x0, dtype=float)
    p = np.array(p0, dtype=float)
    xbar = x.copy()
    KT = K.T
    for it in range(1, max_iter + 1):
        p = prox_fstar(p + sigma * (K @ xbar), sigma)
        x_new = prox_g(x - tau * (KT @ p), tau)
        xbar = x_new + theta * (x_new - x)
        x = x_new
        if check is not None and it % check_every == 0 and check(x, p):
            return x, p, it, True
    return x, p, max_iter, False
