"""Command-line front end.

Exit codes: 0 success, 1 negative result, 2 input error, 3 injectivity
failure, 4 regime violation, 5 solver failure.
"""

import argparse
import json
import logging
import sys

import numpy as np

from . import __version__
from .certificate import ProblemInstance, is_identifiable, min_norm_certificate
from .errors import (MuDegenerateError, NoiseRegimeViolatedError, NotIdentifiableError,
                     NotInjectiveError, SupportCertError, TauOutOfRangeError)
from .experiments import (CounterRNG, load_config, run_sweep, toy_trajectory,
                          uniform_noise, write_sweep_outputs, write_toy_csv)
from .linalg import read_matrix, read_vector
from .solver import OPTIMAL, SolverConfig
from .stability import (analysis_from_record, analysis_to_record, analyze,
                        predicted_noisy_solution, verify_theorem)

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_INPUT = 2
EXIT_INJECTIVITY = 3
EXIT_REGIME = 4
EXIT_SOLVER = 5

# separate from the sweep streams so a CLI noise seed never aliases a trial
_CLI_NOISE_STREAM = 7

DERIVED_NOTE = ("derived: the l2 constants are worked out for this package and are "
                "not a tabulated result")

log = logging.getLogger("supportcert")


class InputError(Exception):
    """Bad flags or unreadable files (exit 2)."""


def _alpha(text):
    t = text.strip().lower()
    if t in ("inf", "infinity"):
        return np.inf
    if t in ("1", "2"):
        return float(t)
    raise argparse.ArgumentTypeError("alpha must be 1, 2 or inf")


def _positive(text):
    try:
        val = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not np.isfinite(val) or val <= 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return val


def _nonneg(text):
    try:
        val = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not np.isfinite(val) or val < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative: {text!r}")
    return val


def _float_list(text):
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list: {text!r}") from None


def _solver_config(args):
    kwargs = {}
    if getattr(args, "tolerance", None) is not None:
        kwargs["tolerance"] = args.tolerance
    if getattr(args, "max_iterations", None) is not None:
        kwargs["max_iterations"] = args.max_iterations
    return SolverConfig(**kwargs)


def _load_instance(args):
    try:
        Phi = read_matrix(args.matrix)
        x0 = read_vector(args.signal)
        return ProblemInstance(Phi, x0, support_tol=args.support_tol)
    except (OSError, ValueError) as exc:
        raise InputError(str(exc)) from exc


def _load_analysis(path):
    try:
        with open(path) as fh:
            rec = json.load(fh)
        return analysis_from_record(rec)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"cannot read analysis file {path}: {exc}") from exc


def _noise(args, m):
    if args.noise_file is not None:
        try:
            w = read_vector(args.noise_file)
        except (OSError, ValueError) as exc:
            raise InputError(str(exc)) from exc
        if w.size != m:
            raise InputError(f"noise has length {w.size}, expected {m}")
        return w
    if args.noise_uniform is not None:
        if args.seed is None:
            raise InputError("--noise-uniform needs --seed")
        return uniform_noise(m, args.noise_uniform, CounterRNG(args.seed, _CLI_NOISE_STREAM))
    return np.zeros(m)


def _write_json(obj, path):
    text = json.dumps(obj, indent=1, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise InputError(str(exc)) from exc


def _ints(a):
    return "{" + ", ".join(str(int(i)) for i in a) + "}"


# -- subcommands ----------------------------------------------------------------

def cmd_certify(args):
    inst = _load_instance(args)
    ok, cert = is_identifiable(inst, _solver_config(args))
    print(f"identifiable: {'true' if ok else 'false'}")
    print(f"support I: {_ints(inst.I)}")
    return EXIT_OK if ok else EXIT_NEGATIVE


def cmd_analyze(args):
    inst = _load_instance(args)
    cfg = _solver_config(args)
    cert = min_norm_certificate(inst, args.alpha, cfg, sat_tol=args.sat_tol)
    an = analyze(inst, args.alpha, cfg, cert=cert)
    rec = analysis_to_record(inst, an)
    if an.constants.get("derived"):
        rec["constants_note"] = DERIVED_NOTE
    _write_json(rec, args.output)
    c = an.constants
    out = sys.stderr if args.output in (None, "-") else sys.stdout
    print(f"alpha: {_a(an.alpha)}", file=out)
    print(f"I: {_ints(inst.I)}", file=out)
    print(f"J: {_ints(an.J)}", file=out)
    print(f"J excess: {_ints(cert.J_excess)}", file=out)
    for key in ("a", "b", "nu", "mu", "v_under", "z_under", "c1", "c2"):
        if c.get(key) is not None:
            print(f"{key}: {c[key]:.12g}", file=out)
    print(f"x_underline: {an.x_underline:.12g}", file=out)
    print(f"tau_max: {an.tau_max_noiseless:.12g}", file=out)
    if c.get("derived"):
        print(f"note: {DERIVED_NOTE}", file=out)
    return EXIT_OK


def _a(alpha):
    return "inf" if np.isinf(alpha) else f"{alpha:g}"


def cmd_predict(args):
    inst, an = _load_analysis(args.analysis)
    w = _noise(args, inst.m)
    x = predicted_noisy_solution(inst, an, w, args.tau, force=args.force)
    supp = np.flatnonzero(x)
    _write_json({"alpha": _a(an.alpha), "tau": args.tau, "x": [float(t) for t in x],
                 "support": [int(i) for i in supp],
                 "support_equals_J": bool(np.array_equal(supp, an.J))}, args.output)
    out = sys.stderr if args.output in (None, "-") else sys.stdout
    print(f"support: {_ints(supp)}", file=out)
    return EXIT_OK


def cmd_verify(args):
    inst, an = _load_analysis(args.analysis)
    w = _noise(args, inst.m)
    cfg = _solver_config(args)
    tol = args.tolerance if args.tolerance is not None else 1e-6
    rep = verify_theorem(inst, an, w, args.tau, cfg, tol=tol)
    print(f"kkt residual: {rep['kkt_residual']:.3e}")
    print(f"objective gap: {rep['objective_gap']:.3e}")
    print(f"solver status: {rep['solver_status']}")
    print(f"predicted support equals J: {str(rep['support_pred_equals_J']).lower()}")
    print(f"solver support equals J: {str(rep['support_solver_equals_J']).lower()}")
    print(f"passed: {str(rep['passed']).lower()}")
    if rep["solver_status"] != OPTIMAL:
        return EXIT_SOLVER
    return EXIT_OK if rep["passed"] else EXIT_NEGATIVE


def cmd_toy(args):
    res = toy_trajectory(args.seed, tau_list=args.tau_list, cfg=_solver_config(args))
    write_toy_csv(res, args.output)
    print(f"seed used: {res.seed}")
    print(f"delta: {res.delta:.12g}")
    print(f"J: {_ints(res.analysis.J)}")
    for tau, supp in zip(res.taus, res.supports()):
        print(f"tau {tau:.6g}: support {_ints(supp)}")
    print(f"wrote {args.output}")
    return EXIT_OK


def cmd_sweep(args):
    try:
        cfg = load_config(args.config)
    except (OSError, ValueError) as exc:
        raise InputError(f"bad config {args.config}: {exc}") from exc
    if args.inv_alpha is not None:
        cfg.alpha_grid = sorted(args.inv_alpha)
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if args.output is not None:
        cfg.output_path = args.output
    try:
        cfg.__post_init__()
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    records = run_sweep(cfg)
    paths = write_sweep_outputs(records, cfg)
    failed = sum(r.identifiable and r.excess_size is None for r in records)
    print(f"records: {len(records)} ({failed} failed solves)")
    for key, path in paths.items():
        print(f"{key}: {path}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="supportcert",
        description="Support stability certificates for l1 recovery.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def solver_flags(p):
        p.add_argument("--tolerance", type=_positive, default=None,
                       help="solver / verification tolerance")
        p.add_argument("--max-iterations", type=int, default=None)

    def instance_flags(p):
        p.add_argument("matrix", help="design matrix file")
        p.add_argument("signal", help="signal vector file")
        p.add_argument("--support-tol", type=_nonneg, default=0.0)

    def noise_flags(p):
        p.add_argument("analysis", help="analysis JSON written by 'analyze'")
        p.add_argument("--tau", type=_positive, required=True)
        g = p.add_mutually_exclusive_group()
        g.add_argument("--noise-file")
        g.add_argument("--noise-uniform", type=_nonneg, metavar="DELTA")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("certify", help="test identifiability")
    instance_flags(p)
    solver_flags(p)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("analyze", help="certificate, multipliers and constants")
    instance_flags(p)
    solver_flags(p)
    p.add_argument("--alpha", type=_alpha, required=True)
    p.add_argument("--sat-tol", type=_nonneg, default=None)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("predict", help="closed-form noisy solution")
    noise_flags(p)
    p.add_argument("--force", action="store_true",
                   help="evaluate the formula outside the regime")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("verify", help="check the prediction against a solver")
    noise_flags(p)
    solver_flags(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("toy", help="noisy l-inf trajectory on a small instance")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--tau-list", type=_float_list, default=None)
    p.add_argument("-o", "--output", default="toy.csv")
    solver_flags(p)
    p.set_defaults(func=cmd_toy)

    p = sub.add_parser("sweep", help="Monte-Carlo sweep to CSV")
    p.add_argument("--config", default="desk",
                   help="preset name (desk, paper_scale) or key=value file")
    p.add_argument("--inv-alpha", type=_float_list, default=None)
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("-o", "--output", default=None, help="output path prefix")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NotIdentifiableError as exc:
        print(f"not identifiable: {exc}", file=sys.stderr)
        return EXIT_NEGATIVE
    except (NotInjectiveError, MuDegenerateError) as exc:
        cond = getattr(exc, "condition", None)
        print(f"injectivity failure{f' ({cond})' if cond else ''}: {exc}", file=sys.stderr)
        return EXIT_INJECTIVITY
    except NoiseRegimeViolatedError as exc:
        print(f"regime violated ({', '.join(exc.violated)}): {exc}", file=sys.stderr)
        return EXIT_REGIME
    except TauOutOfRangeError as exc:
        print(f"regime violated (tau): {exc}", file=sys.stderr)
        return EXIT_REGIME
    except SupportCertError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
