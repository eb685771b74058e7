"""Support stability under small noise.

Given an identifiable ``x0`` and its minimum-norm certificate ``p_beta`` with
extended support ``J``, solutions of

    min ||x||_1  s.t.  ||Phi x - (Phi x0 + w)||_alpha <= tau

are supported on ``J`` as long as ``||w||_alpha < c1 tau`` and
``tau <= c2 min_I |x0|``. On that regime they are affine in ``(w, tau)``:

    x_J = x0_J + R w - tau v_J,

where ``R`` is a restricted inverse of ``Phi[:, J]`` and ``v`` a Lagrange
multiplier, both in closed form for alpha in {1, 2, inf}:

==========  ===============================  ===========================
alpha       restricted inverse ``R``          multiplier ``v_J``
==========  ===============================  ===========================
2           ``pinv(Phi_J)``                   ``pinv(Phi_J) p / ||p||_2``
inf         ``inv(Phi_{S,J})`` on rows S      ``inv(Phi_{S,J}) sign(p_S)``
1           ``inv(Theta Phi_J) Theta``        ``inv(Theta Phi_J) e_last``
==========  ===============================  ===========================

with ``S = supp(p)`` for alpha = inf, ``Z = sat(p)`` for alpha = 1 and
``Theta`` stacking the rows of the identity outside ``Z`` over the signed sum
of the rows in ``Z``.

The constants for alpha = 2 follow the same argument as the polyhedral cases
but are derived here, not quoted; every analysis for alpha = 2 carries
``constants["derived"] = True`` and should be paired with
:func:`verify_theorem`.
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .certificate import Certificate, ProblemInstance, min_norm_certificate
from .errors import (MuDegenerateError, NoiseRegimeViolatedError, NotInjectiveError,
                     SingularMatrixError, SupportCertError, TauOutOfRangeError,
                     TooLargeError)
from .linalg import (RANK_TOL, numerical_rank, op_norm_1_inf, op_norm_2_inf,
                     op_norm_inf_inf, pseudo_inverse, solve_square)
from .solver import (DEFAULT_CONFIG, OPTIMAL, kkt_residual, lp_norm, parse_alpha,
                     solve_primal, subdiff_distance)

SUBGRADIENT_TOL = 1e-6
REGIME_SLACK = 1e-12
MU_MARGIN = 1e-9
LEMMA2_MAX = 12
RANGE_TOL = 1e-8


@dataclass
class StabilityAnalysis:
    """Everything the small-noise prediction needs for one (x0, alpha)."""

    alpha: float
    certificate: Certificate
    injective: bool
    v: np.ndarray
    restricted_inverse: np.ndarray
    constants: dict
    x_underline: float
    tau_max_noiseless: float
    s_J: np.ndarray = None
    details: dict = field(default_factory=dict)

    @property
    def J(self):
        return self.certificate.J

    def to_record(self):
        """JSON-compatible dictionary (infinities spelled as strings)."""
        return {
            "alpha": _num(self.alpha),
            "certificate": self.certificate.to_record(),
            "injective": bool(self.injective),
            "v": [float(t) for t in self.v],
            "s_J": [float(t) for t in self.s_J],
            "restricted_inverse": [[float(t) for t in row]
                                   for row in self.restricted_inverse],
            "constants": {k: (_num(c) if isinstance(c, float) else c)
                          for k, c in self.constants.items()},
            "x_underline": self.x_underline,
            "tau_max_noiseless": _num(self.tau_max_noiseless),
        }

    @classmethod
    def from_record(cls, rec):
        consts = {}
        for k, c in rec["constants"].items():
            consts[k] = _unnum(c) if not isinstance(c, bool) else c
        return cls(
            alpha=_unnum(rec["alpha"]),
            certificate=Certificate.from_record(rec["certificate"]),
            injective=bool(rec["injective"]), v=np.asarray(rec["v"], dtype=float),
            restricted_inverse=np.asarray(rec["restricted_inverse"], dtype=float),
            constants=consts, x_underline=float(rec["x_underline"]),
            tau_max_noiseless=_unnum(rec["tau_max_noiseless"]),
            s_J=np.asarray(rec["s_J"], dtype=float))


def _num(x):
    if x is None:
        return None
    x = float(x)
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _unnum(x):
    if x is None:
        return None
    if isinstance(x, str):
        return float(x.replace("inf", "Infinity")) if "inf" in x else float(x)
    return float(x)


# -- signs and restricted inverses ---------------------------------------------------

def saturation_signs(cert, Phi):
    """Signs of ``(Phi^T p)_J``, snapped to +-1.

    Raises when an entry of J is further than ``sat_tolerance`` from +-1.
    """
    eta = Phi.T @ cert.p
    eJ = eta[cert.J]
    if np.any(np.abs(np.abs(eJ) - 1.0) > cert.sat_tolerance):
        raise SupportCertError("an entry of J is not saturated within sat_tolerance")
    return np.sign(eJ)


def _check_alpha(cert):
    alpha = cert.alpha
    if alpha not in (1.0, 2.0, np.inf):
        raise ValueError("closed forms exist for alpha in {1, 2, inf} only")
    return alpha


def _theta(cert, m):
    Z = np.asarray(cert.Z, dtype=int)
    Zc = np.setdiff1d(np.arange(m), Z)
    theta = np.zeros((Zc.size + 1, m))
    theta[np.arange(Zc.size), Zc] = 1.0
    theta[-1, Z] = np.sign(cert.p[Z])
    return theta, Z, Zc


def _restricted(cert, Phi, rank_tol=RANK_TOL):
    """Return ``(R, core_inverse)`` or raise :class:`NotInjectiveError`."""
    alpha = _check_alpha(cert)
    m = Phi.shape[0]
    J = np.asarray(cert.J, dtype=int)
    A = Phi[:, J]
    if alpha == 2:
        if J.size > m or numerical_rank(A, rank_tol) < J.size:
            raise NotInjectiveError("Phi_J does not have full column rank", "rank")
        Ap = pseudo_inverse(A, rank_tol)
        return Ap, Ap
    if np.isinf(alpha):
        S = np.asarray(cert.S, dtype=int)
        if S.size != J.size:
            raise NotInjectiveError(f"|S| = {S.size} differs from |J| = {J.size}", "size")
        try:
            inv = solve_square(Phi[np.ix_(S, J)], np.eye(J.size))
        except SingularMatrixError as exc:
            raise NotInjectiveError(f"Phi_SJ is singular: {exc}", "singular") from None
        R = np.zeros((J.size, m))
        R[:, S] = inv
        return R, inv
    theta, Z, Zc = _theta(cert, m)
    if Zc.size + 1 != J.size:
        raise NotInjectiveError(
            f"|Z^c| + 1 = {Zc.size + 1} differs from |J| = {J.size}", "size")
    try:
        inv = solve_square(theta @ A, np.eye(J.size))
    except SingularMatrixError as exc:
        raise NotInjectiveError(f"Theta Phi_J is singular: {exc}", "singular") from None
    return inv @ theta, inv


def injectivity_check(cert, Phi, rank_tol=RANK_TOL):
    """Restricted injectivity test.

    Returns ``(True, R)`` with the restricted inverse ``R`` (``|J| x m``) when
    the condition holds, ``(False, None)`` otherwise. Use
    :func:`require_injective` to get the failed condition as an exception.
    """
    try:
        R, _ = _restricted(cert, Phi, rank_tol)
    except NotInjectiveError:
        return False, None
    return True, R


def require_injective(cert, Phi, rank_tol=RANK_TOL):
    return _restricted(cert, Phi, rank_tol)[0]


def lemma2_bruteforce(Phi, cert):
    """Check the generic-position conditions by enumeration (alpha = inf).

    ``s_J = Phi_J^T p`` must lie outside the row space of every ``Phi_{S',J}``
    with ``|S'| < |J|`` and ``q_S = sign(p_S)`` outside the range of every
    ``Phi_{S,J'}`` with ``J' in J``, ``|J'| < |S|``. Ranges grow with the index
    set, so only the largest admissible subsets are enumerated.
    """
    if cert.beta != 1:
        raise ValueError("lemma2_bruteforce applies to beta = 1 certificates")
    m = Phi.shape[0]
    J = np.asarray(cert.J, dtype=int)
    S = np.asarray(cert.S, dtype=int)
    if J.size > LEMMA2_MAX or m > LEMMA2_MAX:
        raise TooLargeError(f"enumeration guard: |J| = {J.size}, m = {m} (max {LEMMA2_MAX})")
    s_J = Phi[:, J].T @ cert.p
    q_S = np.sign(cert.p[S])

    def in_range(M, b):
        if M.size == 0:
            return not np.any(b)
        z = np.linalg.lstsq(M, b, rcond=None)[0]
        return np.linalg.norm(M @ z - b) <= RANGE_TOL

    for rows in combinations(range(m), min(J.size - 1, m)):
        if in_range(Phi[np.ix_(list(rows), J)].T, s_J):
            return False
    for cols in combinations(J, max(S.size - 1, 0)):
        if in_range(Phi[np.ix_(S, list(cols))], q_S):
            return False
    return True


# -- multipliers and solutions -------------------------------------------------------

def multipliers(cert, Phi, restricted_inverse=None, check=True):
    """Closed-form multiplier ``v`` (length n, supported on J).

    With ``check`` the result is verified to satisfy
    ``Phi_J v_J in d||p||_beta`` within 1e-6.
    """
    alpha = _check_alpha(cert)
    n = Phi.shape[1]
    J = np.asarray(cert.J, dtype=int)
    R, inv = _restricted(cert, Phi)
    p = cert.p
    if alpha == 2:
        vJ = R @ (p / np.linalg.norm(p))
    elif np.isinf(alpha):
        vJ = R @ np.sign(p)
    else:
        e = np.zeros(J.size)
        e[-1] = 1.0
        vJ = inv @ e
    v = np.zeros(n)
    v[J] = vJ
    if check:
        gap = subdiff_distance(Phi @ v, p, cert.beta)
        if gap > SUBGRADIENT_TOL:
            raise SupportCertError(
                f"multiplier fails the subgradient condition (distance {gap:.2e})")
    return v


def noiseless_solution(inst, analysis, tau):
    """``x0 - tau v``, the solution for clean data ``Phi x0``.

    Valid for ``0 < tau < x_underline / ||v_I||_inf``.
    """
    if not 0 < tau < analysis.tau_max_noiseless:
        raise TauOutOfRangeError(
            f"tau = {tau:g} outside (0, {analysis.tau_max_noiseless:g})")
    x = np.zeros(inst.n)
    J = analysis.J
    x[J] = inst.x0[J] - tau * analysis.v[J]
    return x


def noise_constants(inst, cert, v, Phi=None):
    """Constants ``a, b, nu, mu, v_under, z_under, c1, c2`` of the regime.

    ``v_under`` is the smallest ``|v_j|`` over the support excess (+inf when
    it is empty). ``mu`` is reported for alpha in {2, inf}, ``z_under`` for
    alpha = 1. Raises :class:`MuDegenerateError` when ``mu >= 1 - 1e-9``.
    """
    Phi = inst.Phi if Phi is None else Phi
    alpha = _check_alpha(cert)
    m = Phi.shape[0]
    J = np.asarray(cert.J, dtype=int)
    vJ = v[J]
    nu = float(np.abs(v).max())
    excess = np.asarray(cert.J_excess, dtype=int)
    v_under = float(np.abs(v[excess]).min()) if excess.size else np.inf
    R, inv = _restricted(cert, Phi)
    c = {"a": None, "b": None, "nu": nu, "mu": None, "v_under": v_under,
         "z_under": None, "derived": False}
    with np.errstate(divide="ignore"):
        if np.isinf(alpha):
            S = np.asarray(cert.S, dtype=int)
            Sc = np.setdiff1d(np.arange(m), S)
            B = Phi[np.ix_(Sc, J)]
            b = op_norm_inf_inf(inv)
            a = op_norm_inf_inf(B @ inv) if Sc.size else 0.0
            mu = float(np.abs(B @ vJ).max(initial=0.0))
            if mu >= 1.0 - MU_MARGIN:
                raise MuDegenerateError(f"mu = {mu:.12g} leaves no admissible noise")
            c1 = min(v_under / b, (1.0 - mu) / (1.0 + a))
            c.update(a=a, b=b, mu=mu)
        elif alpha == 1:
            Z = np.asarray(cert.Z, dtype=int)
            b = op_norm_inf_inf(R)
            E = np.zeros((Z.size, m))
            E[np.arange(Z.size), Z] = 1.0
            a = op_norm_1_inf(E - Phi[np.ix_(Z, J)] @ R)
            z_under = float(np.abs(Phi[np.ix_(Z, J)] @ vJ).min())
            zt = z_under / a if a > 0 else np.inf
            c1 = min(v_under / b, zt)
            c.update(a=a, b=b, z_under=z_under)
        else:
            # derived for the l2 loss: b bounds R from l2 to l-inf, a the
            # component of off-support columns orthogonal to Phi_J, mu the
            # off-support dual margin
            p = cert.p
            out = np.setdiff1d(np.arange(Phi.shape[1]), J)
            b = op_norm_2_inf(R)
            mu = float(np.abs(Phi[:, out].T @ p).max(initial=0.0))
            if mu >= 1.0 - MU_MARGIN:
                raise MuDegenerateError(f"mu = {mu:.12g} leaves no admissible noise")
            P = Phi[:, J] @ R
            resid = Phi[:, out] - P @ Phi[:, out]
            a = float(np.sqrt((resid * resid).sum(axis=0)).max(initial=0.0))
            pn = np.linalg.norm(p)
            t1 = v_under / np.hypot(b, v_under) if np.isfinite(v_under) else np.inf
            t2 = (1.0 - mu) / np.hypot(pn * a, 1.0 - mu)
            c1 = min(t1, t2)
            c.update(a=a, b=b, mu=mu, derived=True)
    c["c1"] = float(c1)
    c["c2"] = float(1.0 / (b * c1 + nu))
    return c


def analyze(inst, alpha, cfg=DEFAULT_CONFIG, cert=None):
    """Certificate, injectivity, multiplier and constants in one record.

    Raises
    ------
    NotIdentifiableError, NotInjectiveError, MuDegenerateError
    """
    alpha = parse_alpha(alpha)
    if cert is None:
        cert = min_norm_certificate(inst, alpha, cfg)
    if not cert.ok:
        raise SupportCertError(f"certificate solve ended with status {cert.solver_status}")
    R = require_injective(cert, inst.Phi)
    v = multipliers(cert, inst.Phi, R)
    s_J = saturation_signs(cert, inst.Phi)
    consts = noise_constants(inst, cert, v)
    vI = np.abs(v[inst.I]).max()
    tau_max = inst.x_underline / vI if vI > 0 else np.inf
    return StabilityAnalysis(alpha=alpha, certificate=cert, injective=True, v=v,
                             restricted_inverse=R, constants=consts,
                             x_underline=inst.x_underline, tau_max_noiseless=tau_max,
                             s_J=s_J)


def regime_violations(analysis, w, tau):
    """Names of the failed regime inequalities (empty when inside)."""
    c1 = analysis.constants["c1"]
    c2 = analysis.constants["c2"]
    bad = []
    if not lp_norm(w, analysis.alpha) < c1 * tau * (1.0 - REGIME_SLACK):
        bad.append("noise")
    if not (0 < tau <= c2 * analysis.x_underline * (1.0 + REGIME_SLACK)):
        bad.append("tau")
    return bad


def _l2_radius(inst, analysis, w, tau):
    J = analysis.J
    A = inst.Phi[:, J]
    r = w - A @ (analysis.restricted_inverse @ w)
    gap = tau * tau - r @ r
    if gap <= 0:
        raise NoiseRegimeViolatedError("noise leaves no room in the l2 ball", ("noise",))
    return np.sqrt(gap), r


def predicted_noisy_solution(inst, analysis, w, tau, force=False, l2_correction=True):
    """Closed-form solution ``x0_J + R w - tau v_J`` on the regime.

    For alpha = 2 the part of ``w`` outside the range of ``Phi_J`` already
    uses up some of the l2 budget. With ``l2_correction`` (the default) the
    shrinkage uses the remaining radius ``sqrt(tau^2 - ||(I - P_J) w||^2)``,
    which makes the prediction exactly optimal; set it to False for the
    uncorrected formula.

    Raises
    ------
    NoiseRegimeViolatedError
        Unless ``force``, when ``||w||_alpha >= c1 tau`` or ``tau > c2 x_underline``.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (inst.m,):
        raise ValueError(f"noise must have length {inst.m}")
    bad = regime_violations(analysis, w, tau)
    if bad and not force:
        raise NoiseRegimeViolatedError(
            "outside the small-noise regime: " + ", ".join(bad), bad)
    shrink = tau
    if analysis.alpha == 2 and l2_correction:
        shrink, _ = _l2_radius(inst, analysis, w, tau)
    J = analysis.J
    x = np.zeros(inst.n)
    x[J] = inst.x0[J] + analysis.restricted_inverse @ w - shrink * analysis.v[J]
    return x


def certifying_dual(inst, analysis, w, tau):
    """Dual vector that certifies the predicted solution.

    This is ``p_beta`` itself for alpha in {1, inf}; for alpha = 2 it picks up
    the component of ``w`` orthogonal to the range of ``Phi_J``.
    """
    p = analysis.certificate.p
    if analysis.alpha != 2:
        return p.copy()
    radius, r = _l2_radius(inst, analysis, w, tau)
    return p + (np.linalg.norm(p) / radius) * r


def verify_theorem(inst, analysis, w, tau, cfg=DEFAULT_CONFIG, tol=1e-6):
    """Cross-check the prediction against an independent solve.

    Returns a dict with the prediction, its KKT residual against the
    certifying dual (and against ``p_beta``), the solver optimum, the
    objective gap and the support comparison. ``passed`` requires residual
    and gap at most ``tol``; support equality is reported, not required,
    since the solver may return another optimum.
    """
    w = np.asarray(w, dtype=float)
    x_pred = predicted_noisy_solution(inst, analysis, w, tau)
    y = inst.y + w
    alpha = analysis.alpha
    p_hat = certifying_dual(inst, analysis, w, tau)
    res = kkt_residual(x_pred, p_hat, inst.Phi, y, alpha, tau)
    res_pb = kkt_residual(x_pred, analysis.certificate.p, inst.Phi, y, alpha, tau)
    solved = solve_primal(inst.Phi, y, alpha, tau, cfg)
    obj_pred = float(np.abs(x_pred).sum())
    gap = abs(obj_pred - solved.objective) if solved.status == OPTIMAL else np.inf
    zero = 1e-9 * max(1.0, np.abs(solved.primal).max(initial=0.0))
    supp_hat = np.flatnonzero(np.abs(solved.primal) > zero)
    supp_pred = np.flatnonzero(x_pred)
    return {
        "alpha": alpha,
        "tau": float(tau),
        "noise_norm": lp_norm(w, alpha),
        "x_pred": x_pred,
        "x_solver": solved.primal,
        "kkt_residual": float(res),
        "kkt_residual_p_beta": float(res_pb),
        "objective_pred": obj_pred,
        "objective_solver": float(solved.objective),
        "objective_gap": float(gap),
        "solver_status": solved.status,
        "solver_kkt_residual": float(solved.kkt_residual),
        "support_pred": supp_pred,
        "support_solver": supp_hat,
        "support_pred_equals_J": bool(np.array_equal(supp_pred, analysis.J)),
        "support_solver_equals_J": bool(np.array_equal(supp_hat, analysis.J)),
        "passed": bool(res <= tol and gap <= tol),
    }


def analysis_to_record(inst, analysis):
    """Analysis record with the instance embedded (the CLI file format)."""
    rec = analysis.to_record()
    rec["instance"] = {
        "Phi": [[float(t) for t in row] for row in inst.Phi],
        "x0": [float(t) for t in inst.x0],
        "support_tol": inst.support_tol,
    }
    return rec


def analysis_from_record(rec):
    inst_rec = rec["instance"]
    inst = ProblemInstance(np.asarray(inst_rec["Phi"], dtype=float),
                           np.asarray(inst_rec["x0"], dtype=float),
                           float(inst_rec.get("support_tol", 0.0)))
    return inst, StabilityAnalysis.from_record(rec)
