"""Convex solvers for the l1 problems and their optimality diagnostics."""

from .kkt import (certificate_kkt_residual, conjugate_exponent, kkt_residual,
                  lp_norm, subdiff_distance)
from .problems import (DEFAULT_CONFIG, INFEASIBLE, MAX_ITER, OPTIMAL, UNBOUNDED,
                       SolveResult, SolverConfig, parse_alpha, solve_basis_pursuit,
                       solve_dual, solve_min_norm_certificate, solve_primal)

__all__ = [
    "DEFAULT_CONFIG", "INFEASIBLE", "MAX_ITER", "OPTIMAL", "UNBOUNDED",
    "SolveResult", "SolverConfig", "certificate_kkt_residual", "conjugate_exponent",
    "kkt_residual", "lp_norm", "parse_alpha", "solve_basis_pursuit", "solve_dual",
    "solve_min_norm_certificate", "solve_primal", "subdiff_distance",
]
