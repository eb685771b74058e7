"""Active-set method for minimum l-beta norm certificates, 1 < beta < inf.

The certificate program

    min ||p||_beta   s.t.   Phi_I^T p = s_I,   |Phi^T p| <= 1

is solved by guessing the saturated columns ``J`` with their signs, solving
the equality-constrained problem on that guess, and then adding the most
violated box constraint or dropping an active constraint whose multiplier has
the wrong sign.

The equality subproblem ``min sum |p|^beta / beta s.t. A^T p = sigma`` is
handled in two ways. For ``beta <= 2`` Newton's method runs on the smooth
dual in ``|J|`` variables

    min_lam  sum_i |(A lam)_i|^alpha / alpha - sigma . lam,

whose minimizer gives ``p = sign(u) |u|^(alpha - 1)`` with ``u = A lam``.
For ``beta > 2`` that dual is singular near ``u = 0``, so Newton's method
runs on ``p`` itself with steps kept on the affine set.
"""

import numpy as np
from scipy.linalg import qr, solve_triangular

from .kkt import conjugate_exponent, lp_norm

_NEWTON_ITERS = 200
_PRIMAL_ITERS = 100
_CURVATURE_FLOOR = 1e-10


class ActiveSetFailure(RuntimeError):
    pass


def _reduced_l2(A, sigma):
    gram = A.T @ A
    try:
        lam = np.linalg.solve(gram, sigma)
    except np.linalg.LinAlgError:
        raise ActiveSetFailure("rank deficient active set") from None
    if not np.all(np.isfinite(lam)) or np.linalg.cond(gram) > 1e14:
        raise ActiveSetFailure("rank deficient active set")
    return A @ lam, lam


def _reduced_dual(A, sigma, alpha, lam):
    def value(lam):
        u = A @ lam
        return float((np.abs(u) ** alpha).sum() / alpha - sigma @ lam)

    if not np.any(lam):
        lam = np.linalg.lstsq(A, np.linalg.pinv(A.T) @ sigma, rcond=None)[0]
        # the dual is homogeneous of degree alpha in lam: rescale the
        # least-squares guess to the best multiple
        u = A @ lam
        F = (np.abs(u) ** alpha).sum()
        if F > 0 and sigma @ lam > 0:
            lam = lam * (sigma @ lam / F) ** (1.0 / (alpha - 1.0))
    scale = max(1.0, np.abs(sigma).max())
    g_old = value(lam)
    best, idle = np.inf, 0
    for _ in range(_NEWTON_ITERS):
        u = A @ lam
        au = np.abs(u)
        p = np.sign(u) * au ** (alpha - 1.0)
        grad = A.T @ p - sigma
        gmax = np.abs(grad).max(initial=0.0)
        if gmax <= 1e-13 * scale:
            return p, lam
        # round-off floor: no progress on the gradient for several steps
        if gmax < 0.5 * best:
            best, idle = gmax, 0
        else:
            idle += 1
            if idle >= 8 and best <= 1e-9 * scale:
                return p, lam
        w = (alpha - 1.0) * np.maximum(au, 1e-150) ** (alpha - 2.0)
        H = A.T @ (w[:, None] * A)
        H[np.diag_indices_from(H)] += 1e-14 * max(1.0, np.abs(np.diag(H)).max())
        try:
            step = np.linalg.solve(H, -grad)
        except np.linalg.LinAlgError:
            raise ActiveSetFailure("singular Newton system") from None
        slope = float(grad @ step)
        if slope >= 0:
            step, slope = -grad, -float(grad @ grad)
        t = 1.0
        while t >= 1e-3:
            cand = lam + t * step
            g_new = value(cand)
            if g_new <= g_old + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            # objective differences at round-off level: judge by the gradient
            gnorm = np.abs(grad).max()
            t = 1.0
            while t >= 1e-3:
                cand = lam + t * step
                uc = A @ cand
                gc = A.T @ (np.sign(uc) * np.abs(uc) ** (alpha - 1.0)) - sigma
                if np.abs(gc).max() < gnorm:
                    break
                t *= 0.5
            else:
                if gnorm > 1e-9 * scale:
                    raise ActiveSetFailure("Newton iteration stalled")
                return p, lam
            g_new = value(cand)
        lam, g_old = cand, g_new
    raise ActiveSetFailure("Newton iteration did not converge")


def _reduced_dual_continued(A, sigma, beta, lam):
    """Dual Newton, falling back to continuation in the exponent.

    The fallback starts from the exact beta = 2 solution and moves the dual
    exponent toward its target in geometric steps, warm-starting each stage
    from the previous certificate.
    """
    alpha = conjugate_exponent(beta)
    try:
        return _reduced_dual(A, sigma, alpha, lam)
    except ActiveSetFailure:
        pass
    p, _ = _reduced_l2(A, sigma)
    stages = max(2, int(np.ceil(np.log(alpha / 2.0) / np.log(1.25))))
    for a in np.geomspace(2.0, alpha, stages + 1)[1:]:
        b = conjugate_exponent(a)
        start = np.linalg.lstsq(A, np.sign(p) * np.abs(p) ** (b - 1.0), rcond=None)[0]
        p, lam = _reduced_dual(A, sigma, a, start)
    return p, lam


class _AffineSet:
    """Orthogonal projection onto ``{p : A^T p = sigma}``."""

    def __init__(self, A, sigma):
        self.Q, R = np.linalg.qr(A)
        if np.abs(np.diag(R)).min(initial=np.inf) <= 1e-12 * np.abs(R).max(initial=1.0):
            raise ActiveSetFailure("rank deficient active set")
        self.base = self.Q @ np.linalg.solve(R.T, sigma)

    def __call__(self, p):
        return p - self.Q @ (self.Q.T @ p) + self.base


def _primal_parts(A, p, beta):
    """Scaled gradient, curvature, multiplier and stationarity residual.

    Everything is computed for ``p / max|p|`` so that large exponents do not
    underflow; the returned ``lam`` is rescaled to the unscaled gradient.
    """
    ap = np.abs(p)
    top = ap.max()
    q = ap / top
    g = np.sign(p) * q ** (beta - 1.0)
    h = (beta - 1.0) * q ** (beta - 2.0)
    h = np.maximum(h, _CURVATURE_FLOOR * h.max())
    w = 1.0 / np.sqrt(h)
    Q, R = qr(A * w[:, None], mode="economic")
    lam = solve_triangular(R, Q.T @ (w * g))
    r = g - A @ lam
    return g, h / top, lam * top ** (beta - 1.0), r


def _stationarity(A, p, beta):
    g, _, lam, r = _primal_parts(A, p, beta)
    return float(np.abs(r).max() / np.abs(g).max()), lam


def _primal_newton(A, beta, p, proj):
    def value(p):
        q = np.abs(p) / top
        return float((q ** beta).sum())

    best, since = np.inf, 0
    for _ in range(_PRIMAL_ITERS):
        top = np.abs(p).max()
        g, h, _, r = _primal_parts(A, p, beta)
        res = np.abs(r).max() / np.abs(g).max()
        if res <= 1e-13:
            break
        if res < 0.5 * best:
            best, since = res, 0
        else:
            since += 1
            if since >= 8:
                break
        dp = -r / h
        slope = beta * float(g @ dp) / top
        f0 = value(p)
        t = 1.0
        while value(proj(p + t * dp)) > f0 + 1e-4 * t * slope and t > 1e-3:
            t *= 0.5
        if t <= 1e-3:
            # objective differences are at round-off level; judge by residual
            t = 1.0
            while t > 1e-6:
                if _stationarity(A, proj(p + t * dp), beta)[0] < res:
                    break
                t *= 0.5
            else:
                break
        p = proj(p + t * dp)
    return p


def _primal_dual_polish(A, sigma, beta, p, iters=20):
    """Undamped Newton on ``A^T p = sigma``, ``p = psi(A lam)``.

    Each coordinate is linearized through whichever of ``p -> |p|^(beta-1)``
    and its inverse has the smaller slope at the current point.
    """
    a = beta / (beta - 1.0)
    phi = lambda z: np.sign(z) * np.abs(z) ** (beta - 1.0)
    psi = lambda u: np.sign(u) * np.abs(u) ** (a - 1.0)
    lam = np.linalg.lstsq(A, phi(p), rcond=None)[0]
    with np.errstate(all="ignore"):
        for _ in range(iters):
            u = A @ lam
            au = np.maximum(np.abs(u), 1e-300)
            ap = np.maximum(np.abs(p), 1e-300)
            dpsi = (a - 1.0) * au ** (a - 2.0)
            inv_dphi = 1.0 / ((beta - 1.0) * ap ** (beta - 2.0))
            use_psi = dpsi <= inv_dphi
            D = np.where(use_psi, dpsi, inv_dphi)
            d = np.where(use_psi, psi(u) - p, (u - phi(p)) * inv_dphi)
            if not np.all(np.isfinite(D)) or not np.all(np.isfinite(d)):
                break
            try:
                dl = np.linalg.solve(A.T @ (D[:, None] * A), sigma - A.T @ (p + d))
            except np.linalg.LinAlgError:
                break
            p = p + d + D * (A @ dl)
            lam = lam + dl
            if not np.all(np.isfinite(p)):
                break
    return p


def _reduced_primal(A, sigma, beta, p_start):
    proj = _AffineSet(A, sigma)

    def polished(p):
        res, lam = _stationarity(A, p, beta)
        if res > 1e-13:
            cand = _primal_dual_polish(A, sigma, beta, p)
            if np.all(np.isfinite(cand)) and np.any(cand):
                cand = proj(cand)
                res_c, lam_c = _stationarity(A, cand, beta)
                if res_c < res:
                    return cand, lam_c, res_c
        return p, lam, res

    p = proj(np.zeros(A.shape[0]) if p_start is None else p_start)
    if not np.any(p):
        raise ActiveSetFailure("zero certificate")
    best = polished(_primal_newton(A, beta, p, proj))
    if best[2] > 1e-6:
        # continuation in the exponent from the beta = 2 solution
        q = proj(np.zeros(A.shape[0]))
        stages = max(2, int(np.ceil(np.log(beta / 2.0) / np.log(1.15))))
        for b in np.geomspace(2.0, beta, stages + 1)[1:]:
            q = _primal_newton(A, b, q, proj)
        cand = polished(q)
        if cand[2] < best[2]:
            best = cand
    return best[0], best[1]


def min_norm_active_set(Phi, I, s_I, beta, tol=1e-10, active=None, signs=None,
                        max_outer=None, p_start=None):
    """Return ``(p, v, outer_iterations)``.

    ``v`` is the multiplier vector with ``Phi v`` in the subdifferential of
    ``||.||_beta`` at ``p``; it is supported on the final active set.
    ``active``/``signs`` optionally warm-start the guess of saturated
    columns outside I and ``p_start`` the certificate itself (used for
    beta > 2). Raises :class:`ActiveSetFailure` when the iteration
    cycles or a subproblem is degenerate.
    """
    if not (1.0 < beta < np.inf):
        raise ValueError("active-set path needs 1 < beta < inf")
    alpha = conjugate_exponent(beta)
    m, n = Phi.shape
    I = [int(i) for i in I]
    sig = np.zeros(n)
    sig[I] = s_I
    in_I = np.zeros(n, dtype=bool)
    in_I[I] = True
    J = list(I)
    if active is not None:
        for j, sj in zip(active, signs):
            if not in_I[j]:
                J.append(int(j))
                sig[j] = sj
    lam_of = {}
    seen = set()
    max_outer = max_outer or 4 * n + 20
    for outer in range(1, max_outer + 1):
        key = frozenset((j, sig[j]) for j in J)
        if key in seen:
            raise ActiveSetFailure("active set cycled")
        seen.add(key)
        if len(J) > m:
            raise ActiveSetFailure("more active constraints than rows")
        A = Phi[:, J]
        sigma = sig[J]
        if alpha == 2.0:
            p, lam = _reduced_l2(A, sigma)
        elif beta < 2.0:
            lam0 = np.array([lam_of.get(j, 0.0) for j in J])
            p, lam = _reduced_dual_continued(A, sigma, beta, lam0)
        else:
            p, lam = _reduced_primal(A, sigma, beta, p_start)
            p_start = p
        lam_of = dict(zip(J, lam))
        # wrong-signed multipliers on the inequality part of the active set
        extra = [k for k, j in enumerate(J) if not in_I[j]]
        if extra:
            bad = np.array([lam[k] * sigma[k] for k in extra])
            worst = int(np.argmax(bad))
            if bad[worst] > max(tol, 1e-9) * np.abs(lam).max():
                drop = J[extra[worst]]
                J.remove(drop)
                sig[drop] = 0.0
                lam_of.pop(drop, None)
                continue
        eta = Phi.T @ p
        viol = np.abs(eta) - 1.0
        viol[J] = -np.inf
        j = int(np.argmax(viol))
        if viol[j] > tol:
            J.append(j)
            sig[j] = np.sign(eta[j])
            continue
        v = np.zeros(n)
        pnorm = lp_norm(p, beta)
        v[J] = lam / pnorm ** (beta - 1.0)
        return p, v, outer
    raise ActiveSetFailure("active-set iteration limit reached")
