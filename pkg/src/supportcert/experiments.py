"""Seeded Monte-Carlo experiments on Gaussian designs.

Randomness comes from a Philox counter-based stream (NumPy's bit
generator) turned into uniforms and, through Box-Muller, into normals.
Every matrix trial owns a stream keyed by ``(master_seed, trial)``, and
every signal one keyed by ``(master_seed, trial, k)``, so records do not
depend on execution order or on the number of workers.
"""

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.stats import norm

from . import __version__
from .certificate import (ProblemInstance, is_identifiable, min_norm_certificate,
                          support_excess_size)
from .errors import NoiseRegimeViolatedError, NotIdentifiableError, SupportCertError
from .solver import OPTIMAL, SolverConfig, solve_primal
from .stability import (analyze, injectivity_check, multipliers, regime_violations,
                        predicted_noisy_solution)

log = logging.getLogger(__name__)

_PHI_STREAM = 0
_SIGNAL_STREAM = 1
_NOISE_STREAM = 2


class CounterRNG:
    """Philox-4x64 stream with explicit uniform and Box-Muller normal draws."""

    def __init__(self, *key):
        seq = np.random.SeedSequence([int(k) for k in key])
        self._bits = np.random.Philox(seq)

    def _raw(self, count):
        return np.asarray(self._bits.random_raw(count), dtype=np.uint64)

    def uniform(self, size):
        """Uniform draws on the open interval (0, 1), 53-bit resolution."""
        count = int(np.prod(size))
        top = (self._raw(count) >> np.uint64(11)).astype(np.float64)
        return ((top + 0.5) * 2.0 ** -53).reshape(size)

    def normal(self, size):
        count = int(np.prod(size))
        half = (count + 1) // 2
        u = self.uniform((2, half))
        r = np.sqrt(-2.0 * np.log(u[0]))
        z = np.concatenate([r * np.cos(2 * np.pi * u[1]), r * np.sin(2 * np.pi * u[1])])
        return z[:count].reshape(size)

    def sample_without_replacement(self, n, k):
        """``k`` distinct indices out of ``n`` (partial Fisher-Yates), sorted."""
        idx = np.arange(n)
        u = self.uniform(k)
        for i in range(k):
            j = i + int(u[i] * (n - i))
            idx[i], idx[j] = idx[j], idx[i]
        return np.sort(idx[:k])


def gaussian_design(m, n, rng):
    return rng.normal((m, n))


def rademacher_signal(n, k, rng):
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    x = np.zeros(n)
    I = rng.sample_without_replacement(n, k)
    x[I] = np.where(rng.uniform(k) < 0.5, -1.0, 1.0)
    return x


def uniform_noise(m, delta, rng):
    if delta < 0:
        raise ValueError("delta must be non-negative")
    if delta == 0:
        return np.zeros(m)
    return delta * (2.0 * rng.uniform(m) - 1.0)


# -- configuration -----------------------------------------------------------------

def alpha_from_inv(inv_alpha):
    inv_alpha = float(inv_alpha)
    return np.inf if inv_alpha == 0 else 1.0 / inv_alpha


def _fmt_alpha(alpha):
    return "inf" if np.isinf(alpha) else f"{alpha:.12g}"


@dataclass
class ExperimentConfig:
    n: int = 100
    m: int = 90
    k_values: list = field(default_factory=lambda: list(range(2, 61, 2)))
    trials_per_k: int = 50
    alpha_grid: list = field(default_factory=lambda: [i / 10 for i in range(11)])
    s_e_values: list = field(default_factory=lambda: [0, 10, math.inf])
    master_seed: int = 0
    output_path: str = "sweep"
    jobs: int = 1
    certificate_tolerance: float = 1e-7
    general_sat_tolerance: float = 1e-5

    def __post_init__(self):
        self.k_values = sorted(int(k) for k in self.k_values)
        self.alpha_grid = sorted(float(a) for a in self.alpha_grid)
        self.s_e_values = sorted(float(s) for s in self.s_e_values)
        if not (1 <= self.m <= self.n):
            raise ValueError("need 1 <= m <= n")
        if not self.k_values or self.k_values[0] < 1 or self.k_values[-1] > self.n:
            raise ValueError("k values must lie in [1, n]")
        if self.trials_per_k < 1:
            raise ValueError("trials_per_k must be >= 1")
        if any(not 0 <= a <= 1 for a in self.alpha_grid):
            raise ValueError("1/alpha values must lie in [0, 1]")

    def header(self):
        d = asdict(self)
        # neither affects the records
        d.pop("jobs")
        d.pop("output_path")
        d["s_e_values"] = [_json_num(s) for s in self.s_e_values]
        return f"# supportcert {__version__} config={json.dumps(d, sort_keys=True)}"


def _json_num(x):
    return "inf" if math.isinf(x) else x


PRESETS = {
    "desk": ExperimentConfig(),
    "paper_scale": ExperimentConfig(
        n=1000, m=900, k_values=list(range(10, 601, 10)), trials_per_k=200,
        alpha_grid=[i / 40 for i in range(41)]),
}


def _parse_list(text, cast):
    text = text.strip()
    if ":" in text:
        # start:stop:step, stop inclusive
        start, stop, step = (float(t) for t in text.split(":"))
        count = int(round((stop - start) / step)) + 1
        return [cast(start + i * step) for i in range(count)]
    return [cast(t) for t in text.replace(",", " ").split()]


def _num_or_inf(t):
    t = str(t).strip().lower()
    return math.inf if t in ("inf", "infinity") else float(t)


def load_config(source):
    """Preset name or a ``key=value`` file ('#' starts a comment).

    A ``preset`` key selects the base preset; list values are comma
    separated or ``start:stop:step`` ranges.
    """
    if source in PRESETS:
        return replace(PRESETS[source])
    with open(source) as fh:
        lines = fh.read().splitlines()
    items = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected key=value")
        key, val = (t.strip() for t in line.split("=", 1))
        items[key] = val
    base = replace(PRESETS[items.pop("preset", "desk")])
    casts = {
        "n": int, "m": int, "trials_per_k": int, "master_seed": int, "jobs": int,
        "output_path": str, "certificate_tolerance": float,
        "general_sat_tolerance": float,
        "k_values": lambda v: _parse_list(v, lambda t: int(round(float(t)))),
        "alpha_grid": lambda v: _parse_list(v, float),
        "inv_alpha": lambda v: _parse_list(v, float),
        "s_e_values": lambda v: _parse_list(v, _num_or_inf),
    }
    kwargs = {}
    for key, val in items.items():
        if key not in casts:
            raise ValueError(f"unknown config key {key!r}")
        kwargs["alpha_grid" if key == "inv_alpha" else key] = casts[key](val)
    return replace(base, **kwargs)


# -- sweep --------------------------------------------------------------------------

@dataclass
class TrialRecord:
    seed: int
    trial: int
    k: int
    identifiable: bool
    inv_alpha: float
    alpha: float
    excess_size: int = None
    injective: bool = None
    mu: float = None
    status: str = ""

    def row(self):
        return [self.seed, self.k, int(self.identifiable), _fmt_alpha(self.alpha),
                f"{self.inv_alpha:.12g}",
                "" if self.excess_size is None else self.excess_size,
                "" if self.injective is None else int(self.injective),
                "" if self.mu is None else f"{self.mu:.12g}"]


CSV_COLUMNS = ["seed", "k", "identifiable", "alpha", "inv_alpha", "excess_size",
               "injective", "mu"]


def trial_seed(master_seed, trial):
    return int(np.random.SeedSequence([master_seed, trial]).generate_state(1)[0])


def draw_instance(master_seed, trial, n, m, k, Phi=None):
    if Phi is None:
        Phi = gaussian_design(m, n, CounterRNG(master_seed, trial, _PHI_STREAM))
    x0 = rademacher_signal(n, k, CounterRNG(master_seed, trial, _SIGNAL_STREAM, k))
    return ProblemInstance(Phi, x0)


def mu_inf(cert, Phi, v):
    """Off-support margin ``||Phi_{S^c, J} v_J||_inf`` for alpha = inf."""
    S = np.asarray(cert.S, dtype=int)
    Sc = np.setdiff1d(np.arange(Phi.shape[0]), S)
    J = cert.J
    return float(np.abs(Phi[np.ix_(Sc, J)] @ v[J]).max(initial=0.0))


def _alpha_record(inst, alpha, cfg, exact_cfg, general_cfg, warm):
    """Certificate statistics for one exponent; returns (fields, certificate)."""
    exact = alpha in (1.0, 2.0, np.inf)
    cert = min_norm_certificate(
        inst, alpha, exact_cfg if exact else general_cfg,
        sat_tol=None if exact else cfg.general_sat_tolerance,
        warm_start=None if exact else warm, known_feasible=True)
    if not cert.ok:
        return {"status": cert.solver_status}, None
    out = {"excess_size": support_excess_size(cert), "status": OPTIMAL}
    if exact:
        ok, R = injectivity_check(cert, inst.Phi)
        out["injective"] = ok
        if ok and np.isinf(alpha):
            v = multipliers(cert, inst.Phi, R)
            out["mu"] = mu_inf(cert, inst.Phi, v)
    return out, cert


def run_trial(cfg, trial):
    """Records for one design matrix across every k and exponent."""
    seed = trial_seed(cfg.master_seed, trial)
    exact_cfg = SolverConfig()
    general_cfg = SolverConfig(tolerance=cfg.certificate_tolerance)
    Phi = gaussian_design(cfg.m, cfg.n, CounterRNG(cfg.master_seed, trial, _PHI_STREAM))
    records = []
    for k in cfg.k_values:
        inst = draw_instance(cfg.master_seed, trial, cfg.n, cfg.m, k, Phi)
        try:
            ident, _ = is_identifiable(inst, exact_cfg)
        except SupportCertError as exc:
            log.warning("trial %d k=%d: identifiability failed: %s", trial, k, exc)
            ident = None
        warm = None
        for inv in cfg.alpha_grid:
            alpha = alpha_from_inv(inv)
            rec = TrialRecord(seed, trial, k, bool(ident), inv, alpha)
            if ident is None:
                rec.status = "error"
            elif not ident:
                rec.status = "not_identifiable"
            else:
                try:
                    fields, cert = _alpha_record(inst, alpha, cfg, exact_cfg,
                                                 general_cfg, warm)
                    for key, val in fields.items():
                        setattr(rec, key, val)
                    if cert is not None and alpha not in (1.0, np.inf):
                        warm = cert
                except (SupportCertError, ValueError, np.linalg.LinAlgError) as exc:
                    log.warning("trial %d k=%d alpha=%s: %s", trial, k,
                                _fmt_alpha(alpha), exc)
                    rec.status = "error"
                if rec.status != OPTIMAL:
                    log.warning("trial %d k=%d alpha=%s: certificate status %s",
                                trial, k, _fmt_alpha(alpha), rec.status)
            records.append(rec)
    return records


def _run_trial_args(args):
    return run_trial(*args)


def run_sweep(cfg, jobs=None):
    """All trial records, ordered by (trial, k, 1/alpha).

    ``jobs > 1`` distributes matrix trials over worker processes; the
    output does not depend on it.
    """
    jobs = cfg.jobs if jobs is None else jobs
    tasks = [(cfg, t) for t in range(cfg.trials_per_k)]
    if jobs <= 1:
        chunks = [run_trial(*t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_trial_args, tasks))
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=lambda r: (r.trial, r.k, r.inv_alpha))
    return records


# -- aggregation ----------------------------------------------------------------------

def wilson_interval(successes, total, level=0.95):
    """Wilson score interval for a binomial proportion."""
    if total == 0:
        return 0.0, 1.0
    z = norm.ppf(0.5 + level / 2)
    ph = successes / total
    denom = 1 + z * z / total
    centre = (ph + z * z / (2 * total)) / denom
    half = z * math.sqrt(ph * (1 - ph) / total + z * z / (4 * total * total)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == total else min(1.0, centre + half)
    return lo, hi


def _group(records):
    groups = {}
    for r in records:
        groups.setdefault((r.inv_alpha, r.k), []).append(r)
    return groups


def _hit(r, s_e):
    return r.identifiable and r.excess_size is not None and r.excess_size <= s_e


def probability_curves(records, s_e_values):
    """Rows ``(inv_alpha, alpha, s_e, k, successes, trials, prob, lo, hi)``.

    ``prob`` is the fraction of trials with an identifiable signal and a
    support excess of at most ``s_e``; failed certificate solves count as
    misses.
    """
    if not records:
        raise ValueError("no records")
    rows = []
    groups = _group(records)
    for (inv, k), recs in sorted(groups.items()):
        for s_e in sorted(float(s) for s in s_e_values):
            hits = sum(_hit(r, s_e) for r in recs)
            lo, hi = wilson_interval(hits, len(recs))
            rows.append({"inv_alpha": inv, "alpha": recs[0].alpha, "s_e": s_e, "k": k,
                         "successes": hits, "trials": len(recs),
                         "prob": hits / len(recs), "lo": lo, "hi": hi})
    return rows


def alpha_heatmap(records, s_e):
    """``(inv_alphas, ks, grid)`` with ``grid[i, j]`` the probability at
    ``(inv_alphas[i], ks[j])``."""
    groups = _group(records)
    invs = sorted({key[0] for key in groups})
    ks = sorted({key[1] for key in groups})
    grid = np.full((len(invs), len(ks)), np.nan)
    for (inv, k), recs in groups.items():
        grid[invs.index(inv), ks.index(k)] = sum(_hit(r, s_e) for r in recs) / len(recs)
    return invs, ks, grid


def transition_k(ks, probs, level=0.5):
    """Largest k whose probability is at least ``level`` (None if none)."""
    good = [k for k, p in zip(ks, probs) if p >= level]
    return max(good) if good else None


# -- CSV output ------------------------------------------------------------------------

def write_records_csv(records, path, cfg):
    with open(path, "w", newline="") as fh:
        fh.write(cfg.header() + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow(r.row())


def write_curves_csv(rows, path, cfg):
    with open(path, "w", newline="") as fh:
        fh.write(cfg.header() + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "alpha", "inv_alpha", "s_e", "successes", "trials", "prob",
                    "ci_low", "ci_high"])
        for r in sorted(rows, key=lambda r: (r["k"], r["inv_alpha"], r["s_e"])):
            s_e = "inf" if math.isinf(r["s_e"]) else int(r["s_e"])
            w.writerow([r["k"], _fmt_alpha(r["alpha"]), f"{r['inv_alpha']:.12g}", s_e,
                        r["successes"], r["trials"], f"{r['prob']:.12g}",
                        f"{r['lo']:.12g}", f"{r['hi']:.12g}"])


def write_heatmap_csv(invs, ks, grid, path, cfg, s_e):
    with open(path, "w", newline="") as fh:
        fh.write(cfg.header() + f" s_e={s_e}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["inv_alpha"] + [f"k={k}" for k in ks] + ["transition_k"])
        for i, inv in enumerate(invs):
            tk = transition_k(ks, grid[i])
            w.writerow([f"{inv:.12g}"] + [f"{p:.12g}" for p in grid[i]]
                       + ["" if tk is None else tk])


def write_sweep_outputs(records, cfg, prefix=None):
    """Records, curves and one heatmap per finite s_e; returns the paths."""
    prefix = cfg.output_path if prefix is None else prefix
    paths = {"records": f"{prefix}_records.csv", "curves": f"{prefix}_curves.csv"}
    write_records_csv(records, paths["records"], cfg)
    write_curves_csv(probability_curves(records, cfg.s_e_values), paths["curves"], cfg)
    for s_e in cfg.s_e_values:
        tag = "inf" if math.isinf(s_e) else str(int(s_e))
        invs, ks, grid = alpha_heatmap(records, s_e)
        key = f"heatmap_se{tag}"
        paths[key] = f"{prefix}_{key}.csv"
        write_heatmap_csv(invs, ks, grid, paths[key], cfg, tag)
    return paths


# -- toy trajectory ---------------------------------------------------------------------

TOY_N, TOY_M, TOY_K = 20, 10, 4
TOY_FRACTIONS = (0.1, 0.3, 0.5, 0.7, 0.9)


@dataclass
class ToyResult:
    seed: int
    instance: ProblemInstance
    analysis: object
    delta: float
    w: np.ndarray
    taus: list
    solutions: list
    predictions: list
    eta: np.ndarray

    def supports(self):
        return [np.flatnonzero(np.abs(x) > 1e-9) for x in self.solutions]


def toy_trajectory(seed, tau_list=None, fractions=TOY_FRACTIONS, max_redraws=100,
                   cfg=None):
    """Noisy l-inf trajectory on a 10 x 20 design with a 4-sparse signal.

    Draws redraw with ``seed + 1, seed + 2, ...`` until the signal is
    identifiable and the restricted injectivity holds. Without ``tau_list``
    the taus are ``fractions`` of ``c2 * x_underline``. The noise is uniform
    with ``delta = 0.9 c1 min(tau)``.

    Raises
    ------
    NoiseRegimeViolatedError
        When a requested tau exceeds ``c2 * x_underline``.
    """
    cfg = SolverConfig() if cfg is None else cfg
    for s in range(seed, seed + max_redraws):
        Phi = gaussian_design(TOY_M, TOY_N, CounterRNG(s, 0, _PHI_STREAM))
        inst = draw_instance(s, 0, TOY_N, TOY_M, TOY_K, Phi)
        if not is_identifiable(inst, cfg)[0]:
            continue
        try:
            an = analyze(inst, np.inf, cfg)
        except SupportCertError as exc:
            log.info("toy seed %d rejected: %s", s, exc)
            continue
        break
    else:
        raise NotIdentifiableError(f"no usable instance in {max_redraws} seeds from {seed}")
    top = an.constants["c2"] * an.x_underline
    taus = [f * top for f in fractions] if tau_list is None else [float(t) for t in tau_list]
    if not taus or any(t <= 0 for t in taus) or any(b <= a for a, b in zip(taus, taus[1:])):
        raise ValueError("tau list must be positive and increasing")
    delta = 0.9 * an.constants["c1"] * taus[0]
    w = uniform_noise(TOY_M, delta, CounterRNG(s, 0, _NOISE_STREAM))
    sols, preds = [], []
    for tau in taus:
        bad = regime_violations(an, w, tau)
        if bad:
            raise NoiseRegimeViolatedError(f"tau = {tau:g} outside the regime", bad)
        preds.append(predicted_noisy_solution(inst, an, w, tau))
        res = solve_primal(inst.Phi, inst.y + w, np.inf, tau, cfg)
        if res.status != OPTIMAL:
            raise SupportCertError(f"solve at tau={tau:g} ended with {res.status}")
        sols.append(res.primal)
    return ToyResult(s, inst, an, delta, w, taus, sols, preds,
                     inst.Phi.T @ an.certificate.p)


TOY_COLUMNS = ["seed", "tau", "delta", "i", "x0", "x_tau", "x_pred", "in_I", "in_J",
               "eta"]


def write_toy_csv(result, path):
    """Long format: one row per (tau, coordinate)."""
    in_I = np.zeros(result.instance.n, dtype=int)
    in_I[result.instance.I] = 1
    in_J = np.zeros(result.instance.n, dtype=int)
    in_J[result.analysis.J] = 1
    with open(path, "w", newline="") as fh:
        fh.write(f"# supportcert {__version__} toy seed={result.seed} n={TOY_N} m={TOY_M} "
                 f"k={TOY_K} alpha=inf delta={result.delta:.12g}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TOY_COLUMNS)
        for tau, x, xp in zip(result.taus, result.solutions, result.predictions):
            for i in range(result.instance.n):
                w.writerow([result.seed, f"{tau:.12g}", f"{result.delta:.12g}", i,
                            f"{result.instance.x0[i]:.12g}", f"{_snap(x[i]):.12g}",
                            f"{_snap(xp[i]):.12g}", in_I[i], in_J[i],
                            f"{result.eta[i]:.12g}"])


def _snap(t):
    # keep round-off zeros from printing as -1e-17
    return 0.0 if abs(t) < 1e-13 else t
