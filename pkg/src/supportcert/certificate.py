"""Identifiability and the combinatorics of minimum-norm certificates.

A certificate for ``x0`` is a vector ``p`` with ``Phi_I^T p = sign(x0_I)`` and
``||Phi^T p||_inf <= 1``. The certificate of least l-beta norm, with beta
conjugate to the loss exponent alpha, fixes the extended support

    J = {i : |(Phi^T p)_i| = 1},

which always contains I. ``J \\ I`` is the support excess.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NotIdentifiableError, SupportCertError
from .linalg import as_matrix, as_vector
from .solver import (DEFAULT_CONFIG, INFEASIBLE, OPTIMAL, SolverConfig,
                     conjugate_exponent, lp_norm, parse_alpha,
                     solve_min_norm_certificate)

SAT_TOL = 1e-7
GENERAL_SAT_TOL = 1e-5


def support(u, tol=0.0):
    """Indices with ``|u_i| > tol``."""
    if tol < 0:
        raise ValueError("tol must be non-negative")
    u = np.asarray(u, dtype=float)
    return np.flatnonzero(np.abs(u) > tol)


def saturation_support(u, tol=0.0):
    """Indices with ``|u_i| >= ||u||_inf - tol``; empty for the zero vector."""
    if tol < 0:
        raise ValueError("tol must be non-negative")
    u = np.asarray(u, dtype=float)
    top = np.abs(u).max(initial=0.0)
    if top == 0.0:
        return np.array([], dtype=int)
    return np.flatnonzero(np.abs(u) >= top - tol)


@dataclass(frozen=True)
class ProblemInstance:
    """Design ``Phi`` (m x n) and a nonzero signal ``x0``.

    ``I`` and ``s_I`` are derived: the entries of ``x0`` above
    ``support_tol`` and their signs.
    """

    Phi: np.ndarray
    x0: np.ndarray
    support_tol: float = 0.0
    I: np.ndarray = field(init=False, repr=False)
    s_I: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        Phi = as_matrix(self.Phi)
        x0 = as_vector(self.x0)
        if x0.size != Phi.shape[1]:
            raise ValueError(f"x0 has length {x0.size}, Phi has {Phi.shape[1]} columns")
        I = support(x0, self.support_tol)
        if I.size == 0:
            raise ValueError("x0 has an empty support")
        object.__setattr__(self, "Phi", Phi)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "I", I)
        object.__setattr__(self, "s_I", np.sign(x0[I]))

    @property
    def m(self):
        return self.Phi.shape[0]

    @property
    def n(self):
        return self.Phi.shape[1]

    @property
    def y(self):
        return self.Phi @ self.x0

    @property
    def x_underline(self):
        return float(np.abs(self.x0[self.I]).min())


@dataclass
class Certificate:
    """A minimum-norm certificate with its saturation data.

    ``S`` is only set for beta = 1 and ``Z`` only for beta = inf. ``v`` is the
    multiplier returned by the solver, ``nonunique`` is True when a second
    optimal vertex with a different ``J`` was found (None when not checked).
    """

    beta: float
    p: np.ndarray
    I: np.ndarray
    J: np.ndarray
    J_excess: np.ndarray
    sat_tolerance: float
    solver_status: str
    kkt_residual: float
    objective: float
    S: np.ndarray = None
    Z: np.ndarray = None
    v: np.ndarray = None
    nonunique: bool = None

    @property
    def alpha(self):
        return conjugate_exponent(self.beta)

    @property
    def ok(self):
        return self.solver_status == OPTIMAL

    def to_record(self):
        """JSON-compatible dictionary."""

        def idx(a):
            return None if a is None else [int(i) for i in a]

        return {
            "beta": _num(self.beta),
            "alpha": _num(self.alpha),
            "p": [float(t) for t in self.p],
            "I": idx(self.I),
            "J": idx(self.J),
            "J_excess": idx(self.J_excess),
            "S": idx(self.S),
            "Z": idx(self.Z),
            "sat_tolerance": self.sat_tolerance,
            "solver_status": self.solver_status,
            "kkt_residual": _num(self.kkt_residual),
            "objective": _num(self.objective),
            "nonunique": self.nonunique,
        }

    @classmethod
    def from_record(cls, rec):
        def idx(a):
            return None if a is None else np.asarray(a, dtype=int)

        return cls(
            beta=parse_alpha(rec["beta"]), p=np.asarray(rec["p"], dtype=float),
            I=idx(rec["I"]), J=idx(rec["J"]), J_excess=idx(rec["J_excess"]),
            sat_tolerance=float(rec["sat_tolerance"]),
            solver_status=rec["solver_status"],
            kkt_residual=float(rec["kkt_residual"]), objective=float(rec["objective"]),
            S=idx(rec.get("S")), Z=idx(rec.get("Z")), nonunique=rec.get("nonunique"))


def _num(x):
    x = float(x)
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _build(inst, beta, res, sat_tol):
    p = res.primal
    eta = inst.Phi.T @ p
    J = np.flatnonzero(np.abs(eta) >= 1.0 - sat_tol)
    J_excess = np.setdiff1d(J, inst.I)
    top = np.abs(p).max(initial=0.0)
    S = support(p, 1e-10 * top) if beta == 1 else None
    Z = saturation_support(p, sat_tol * top) if np.isinf(beta) else None
    return Certificate(beta=beta, p=p, I=inst.I, J=J, J_excess=J_excess,
                       sat_tolerance=sat_tol, solver_status=res.status,
                       kkt_residual=res.kkt_residual, objective=res.objective,
                       S=S, Z=Z, v=res.dual)


def is_identifiable(inst, cfg=DEFAULT_CONFIG):
    """Return ``(identifiable, certificate)``.

    ``x0`` solves Basis Pursuit from ``Phi x0`` exactly when some certificate
    exists; the l1-minimal one found by the feasibility LP is returned for
    diagnostics, or None when there is none.
    """
    res = solve_min_norm_certificate(inst.Phi, inst.I, inst.s_I, 1.0, cfg)
    if res.status == INFEASIBLE:
        return False, None
    if res.status != OPTIMAL:
        raise SupportCertError(f"feasibility LP ended with status {res.status}")
    return True, _build(inst, 1.0, res, SAT_TOL)


def min_norm_certificate(inst, alpha, cfg=DEFAULT_CONFIG, sat_tol=None,
                         check_uniqueness=False, warm_start=None, known_feasible=False):
    """Minimum l-beta norm certificate for the loss exponent ``alpha``.

    Parameters
    ----------
    inst : ProblemInstance
    alpha : float or str
        Loss exponent; beta is its conjugate. Any alpha >= 1 is accepted.
    cfg : SolverConfig
    sat_tol : float, optional
        Absolute tolerance against level 1 for membership in J. Defaults to
        1e-7 for alpha in {1, 2, inf} and 1e-5 otherwise.
    check_uniqueness : bool
        For beta in {1, inf}, re-solve with the in-repo simplex under the
        Dantzig rule and flag ``nonunique`` when it lands on a vertex with a
        different J.
    warm_start : Certificate, optional
        Certificate for a nearby exponent, used to seed the active set.
    known_feasible : bool
        Skip the feasibility LP when identifiability is already known.

    Raises
    ------
    NotIdentifiableError
        When the certificate set is empty.
    """
    alpha = parse_alpha(alpha)
    beta = conjugate_exponent(alpha)
    exact = alpha in (1.0, 2.0, np.inf)
    if sat_tol is None:
        sat_tol = SAT_TOL if exact else GENERAL_SAT_TOL
    warm = None if warm_start is None else warm_start.p
    res = solve_min_norm_certificate(inst.Phi, inst.I, inst.s_I, beta, cfg,
                                     warm_start=warm, known_feasible=known_feasible)
    if res.status == INFEASIBLE:
        raise NotIdentifiableError("the certificate set is empty: x0 is not identifiable")
    cert = _build(inst, beta, res, sat_tol)
    if check_uniqueness and beta in (1.0, np.inf) and cert.ok:
        alt_cfg = SolverConfig(tolerance=cfg.tolerance, max_iterations=cfg.max_iterations,
                               lp_pivot_rule="dantzig", lp_backend="simplex")
        alt = solve_min_norm_certificate(inst.Phi, inst.I, inst.s_I, beta, alt_cfg,
                                         known_feasible=True)
        if alt.ok:
            alt_J = np.flatnonzero(np.abs(inst.Phi.T @ alt.primal) >= 1.0 - sat_tol)
            cert.nonunique = not np.array_equal(alt_J, cert.J)
    return cert


def support_excess_size(cert):
    """Size of the predicted support excess ``J \\ I``."""
    return int(len(cert.J_excess))


def certificate_norm(cert):
    return lp_norm(cert.p, cert.beta)
