"""Acceptance criteria, one test per criterion.

Each test prints a ``CRITERION n: PASS/FAIL`` line (collected again in the
terminal summary) before asserting.
"""

import csv
import io
import math
import os
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from supportcert.certificate import (ProblemInstance, is_identifiable,
                                     min_norm_certificate)
from supportcert.errors import SupportCertError
from supportcert.experiments import (PRESETS, CounterRNG, TrialRecord, alpha_heatmap,
                                     draw_instance, gaussian_design, mu_inf,
                                     probability_curves, rademacher_signal, run_sweep,
                                     run_trial, transition_k, write_records_csv,
                                     write_sweep_outputs)
from supportcert.linalg import pseudo_inverse
from supportcert.solver import (kkt_residual, lp_norm, solve_basis_pursuit,
                                solve_dual, solve_primal, subdiff_distance)
from supportcert.stability import (analyze, injectivity_check, multipliers,
                                   noiseless_solution, predicted_noisy_solution)

from helpers import report, soft_threshold, usable_instance

POOL_SEED = 1
POOL_SIZE = 100
POOL_SHAPE = (20, 10, 4)  # n, m, k
FRACTIONS = (0.1, 0.3, 0.5, 0.7, 0.9)
LP_ALPHAS = (1.0, np.inf)

SLOW = settings(derandomize=True, database=None, deadline=None, print_blob=False,
                suppress_health_check=list(HealthCheck))


def _alpha_name(alpha):
    return "inf" if np.isinf(alpha) else f"{alpha:g}"


def _csv_bytes(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue().encode()


# -- shared instance pool --------------------------------------------------------------

def build_pool():
    """First ``POOL_SIZE`` draws usable for both LP exponents.

    Returns ``(pool, skipped)`` where ``pool`` holds ``(trial, instance,
    {alpha: analysis})`` and ``skipped`` counts rejected draws by reason.
    """
    n, m, k = POOL_SHAPE
    pool, skipped = [], {"not_identifiable": 0, "not_injective": 0}
    trial = 0
    while len(pool) < POOL_SIZE:
        inst = draw_instance(POOL_SEED, trial, n, m, k)
        trial += 1
        if not is_identifiable(inst)[0]:
            skipped["not_identifiable"] += 1
            continue
        try:
            analyses = {a: analyze(inst, a) for a in LP_ALPHAS}
        except SupportCertError:
            skipped["not_injective"] += 1
            continue
        pool.append((trial - 1, inst, analyses))
    return pool, skipped


_CACHE = {}


def cached(key, fn):
    if key not in _CACHE:
        t0 = time.perf_counter()
        value = fn()
        _CACHE[key] = (value, time.perf_counter() - t0)
    return _CACHE[key]


def pool():
    return cached("pool", build_pool)


# -- criterion computations (re-run verbatim by the determinism check) -----------------

C1_HEADER = ["trial", "alpha", "tau", "objective_closed", "objective_lp", "kkt"]


def criterion1_rows(pool_):
    rows = []
    for trial, inst, analyses in pool_:
        for alpha in LP_ALPHAS:
            an = analyses[alpha]
            for frac in FRACTIONS:
                tau = frac * an.tau_max_noiseless
                x = noiseless_solution(inst, an, tau)
                lp = solve_primal(inst.Phi, inst.y, alpha, tau)
                rows.append((trial, _alpha_name(alpha), float(tau), float(np.abs(x).sum()),
                             float(lp.objective),
                             float(kkt_residual(x, an.certificate.p, inst.Phi, inst.y,
                                                alpha, tau))))
    return rows


C2_HEADER = ["trial", "alpha", "tau", "noise_norm", "kkt_p_beta", "support_equals_J",
             "support_size"]


def criterion2_rows(pool_):
    rows = []
    for trial, inst, analyses in pool_:
        for alpha in LP_ALPHAS:
            an = analyses[alpha]
            c1, c2 = an.constants["c1"], an.constants["c2"]
            tau = 0.5 * c2 * an.x_underline
            u = CounterRNG(POOL_SEED, trial, 3, int(np.isinf(alpha))).uniform(inst.m) - 0.5
            w = 0.5 * c1 * tau * u / lp_norm(u, alpha)
            x = predicted_noisy_solution(inst, an, w, tau)
            kkt = kkt_residual(x, an.certificate.p, inst.Phi, inst.y + w, alpha, tau)
            supp = np.flatnonzero(x)
            rows.append((trial, _alpha_name(alpha), float(tau), float(lp_norm(w, alpha)),
                         float(kkt), int(np.array_equal(supp, an.J)), int(supp.size)))
    return rows


C3_HEADER = ["case", "tau", "max_abs_error", "a", "mu", "b", "nu", "c1", "c2"]


def criterion3_rows():
    rows = []
    for case in range(20):
        rng = CounterRNG(POOL_SEED, case, 4)
        n = 3 + case % 6
        k = 1 + case % n
        x0 = rademacher_signal(n, k, rng) * (1.0 + 4.0 * rng.uniform(n))
        inst = ProblemInstance(np.eye(n), x0)
        an = analyze(inst, np.inf)
        c = an.constants
        tau = (0.1 + 0.8 * rng.uniform(1)[0]) * c["c2"] * an.x_underline
        w = (2.0 * rng.uniform(n) - 1.0) * 0.9 * c["c1"] * tau
        x = predicted_noisy_solution(inst, an, w, tau)
        err = float(np.abs(x - soft_threshold(inst.y + w, tau)).max())
        rows.append((case, float(tau), err, float(c["a"]), float(c["mu"]), float(c["b"]),
                     float(c["nu"]), float(c["c1"]), float(c["c2"])))
    return rows


C4_HEADER = ["case", "k", "certificate_exists", "bp_objective", "x0_l1", "bp_says_optimal"]


def criterion4_rows():
    rows = []
    for case in range(200):
        rng = CounterRNG(POOL_SEED, case, 5)
        Phi = gaussian_design(6, 10, rng)
        k = 1 + case % 5
        x0 = rademacher_signal(10, k, rng)
        if case % 2:
            x0 = x0 * (0.5 + rng.uniform(10))
        inst = ProblemInstance(Phi, x0)
        exists = is_identifiable(inst)[0]
        bp = solve_basis_pursuit(Phi, inst.y)
        l1 = float(np.abs(x0).sum())
        rows.append((case, k, int(exists), float(bp.objective), l1,
                     int(bp.objective >= l1 - 1e-8)))
    return rows


C5_HEADER = ["source", "trial", "k", "mu"]


def criterion5_rows(pool_):
    rows = []
    for trial, inst, analyses in pool_:
        an = analyses[np.inf]
        rows.append(("pool", trial, int(inst.I.size), float(an.constants["mu"])))
    # a second family across sparsity levels, including non-injective draws
    for trial in range(60):
        inst = draw_instance(POOL_SEED + 1, trial, 40, 24, 2 + trial % 10)
        if not is_identifiable(inst)[0]:
            continue
        cert = min_norm_certificate(inst, np.inf)
        ok, R = injectivity_check(cert, inst.Phi)
        if ok:
            v = multipliers(cert, inst.Phi, R)
            rows.append(("family", trial, int(inst.I.size), mu_inf(cert, inst.Phi, v)))
    return rows


# -- criterion tests -------------------------------------------------------------------

def test_criterion_1_closed_form_matches_lp():
    (pool_, skipped), t_pool = pool()
    t0 = time.perf_counter()
    rows, _ = cached("c1", lambda: criterion1_rows(pool_))
    elapsed = time.perf_counter() - t0 + t_pool
    gap = max(abs(r[3] - r[4]) for r in rows)
    kkt = max(r[5] for r in rows)
    ok = len(rows) == 1000 and gap <= 1e-6 and kkt <= 1e-6 and elapsed <= 120
    report(1, ok, f"{len(rows)} solves on {len(pool_)} instances (skipped {skipped}); "
                  f"max objective gap {gap:.2e} (<=1e-6), max KKT {kkt:.2e} (<=1e-6), "
                  f"{elapsed:.1f}s (<=120s)")
    assert ok


def test_criterion_2_noisy_prediction_regime():
    (pool_, _), t_pool = pool()
    t0 = time.perf_counter()
    rows, _ = cached("c2", lambda: criterion2_rows(pool_))
    elapsed = time.perf_counter() - t0 + t_pool
    kkt = max(r[4] for r in rows)
    same = sum(r[5] for r in rows)
    ok = kkt <= 1e-6 and same == len(rows) and elapsed <= 180
    report(2, ok, f"{len(rows)} trials; max KKT against p_beta {kkt:.2e} (<=1e-6), "
                  f"supp = J in {same}/{len(rows)}, {elapsed:.1f}s (<=180s)")
    assert ok


def test_criterion_3_identity_design():
    rows, _ = cached("c3", criterion3_rows)
    err = max(r[2] for r in rows)
    consts_ok = all(r[3:] == (0.0, 0.0, 1.0, 1.0, 1.0, 0.5) for r in rows)
    ok = err <= 1e-12 and consts_ok
    report(3, ok, f"{len(rows)} identity cases; max deviation from soft-thresholding "
                  f"{err:.1e} (<=1e-12); constants a=0 mu=0 b=nu=1 c1=1 c2=0.5: {consts_ok}")
    assert ok


def test_criterion_4_identifiability_equivalence():
    rows, _ = cached("c4", criterion4_rows)
    agree = sum(r[2] == r[5] for r in rows)
    positives = sum(r[2] for r in rows)
    ok = agree == len(rows) == 200
    report(4, ok, f"agreement {agree}/{len(rows)} (100% required); "
                  f"{positives} identifiable, {len(rows) - positives} not")
    assert ok


def test_criterion_5_mu_below_one(desk_sweep):
    (pool_, _), _ = pool()
    rows, _ = cached("c5", lambda: criterion5_rows(pool_))
    records = desk_sweep["records"]
    sweep_mu = [r.mu for r in records
                if np.isinf(r.alpha) and r.injective and r.mu is not None]
    injective_inf = sum(1 for r in records if np.isinf(r.alpha) and r.injective)
    mus = [r[3] for r in rows] + sweep_mu
    worst = max(mus)
    ok = worst < 1 and len(sweep_mu) == injective_inf
    report(5, ok, f"{len(mus)} injective alpha=inf trials ({len(rows)} small-scale, "
                  f"{len(sweep_mu)} from the desk sweep); max mu {worst:.8f} (<1)")
    assert ok


def _sweep_jobs():
    return max(1, min(4, os.cpu_count() or 1))


@pytest.fixture(scope="module")
def desk_sweep(tmp_path_factory):
    def run():
        cfg = PRESETS["desk"]
        out = tmp_path_factory.mktemp("desk")
        t0 = time.perf_counter()
        records = run_sweep(cfg, jobs=_sweep_jobs())
        elapsed = time.perf_counter() - t0
        paths = write_sweep_outputs(records, cfg, str(out / "desk"))
        files = {key: open(p, "rb").read() for key, p in paths.items()}
        return {"cfg": cfg, "records": records, "elapsed": elapsed, "files": files}
    return cached("sweep", run)[0]


def _curve(rows, inv, s_e):
    sel = sorted((r for r in rows if r["inv_alpha"] == inv and r["s_e"] == s_e),
                 key=lambda r: r["k"])
    return sel


def test_criterion_6_desk_sweep_orderings(desk_sweep):
    cfg, records = desk_sweep["cfg"], desk_sweep["records"]
    rows = probability_curves(records, cfg.s_e_values)
    kmin = min(cfg.k_values)
    # (i) alpha = inf is essentially never stable at the smallest k
    first = [r for r in _curve(rows, 0.0, 0.0) if r["k"] == kmin][0]
    ok_i = first["prob"] <= 0.05
    # (ii) at s_e = 0 the alpha = 2 curve is not below the others beyond its CI
    l2 = {r["k"]: r for r in _curve(rows, 0.5, 0.0)}
    breaches = []
    for inv in (0.0, 1.0):
        for r in _curve(rows, inv, 0.0):
            if l2[r["k"]]["hi"] < r["prob"]:
                breaches.append((_alpha_name(r["alpha"]), r["k"]))
    ok_ii = not breaches
    # (iii) transition k of the heatmap is maximal on the alpha = 2 row
    trans = {}
    ok_iii = True
    for s_e in (s for s in cfg.s_e_values if math.isfinite(s)):
        invs, ks, grid = alpha_heatmap(records, s_e)
        tk = [transition_k(ks, grid[i]) or 0 for i in range(len(invs))]
        trans[s_e] = dict(zip(invs, tk))
        ok_iii &= tk[invs.index(0.5)] == max(tk)
    failed = sum(r.status not in ("Optimal", "not_identifiable") for r in records)
    elapsed = desk_sweep["elapsed"]
    ok_time = elapsed <= 30 * 60
    ok = ok_i and ok_ii and ok_iii and ok_time
    t0 = trans.get(0.0, {})
    report(6, ok, f"(i) P(stable, alpha=inf, k={kmin}) = {first['prob']:.3f} (<=0.05); "
                  f"(ii) CI breaches {breaches or 'none'}; "
                  f"(iii) transition k at s_e=0: alpha=2 {t0.get(0.5)}, "
                  f"max over rows {max(t0.values()) if t0 else None}, all finite s_e ok "
                  f"{ok_iii}; {len(records)} records, {failed} failed solves; "
                  f"{elapsed / 60:.1f} min with {_sweep_jobs()} worker(s) (<=30 min)")
    assert ok


def test_criterion_7_determinism(desk_sweep, tmp_path):
    (pool_, _), _ = pool()
    first = {
        "c1": _csv_bytes(C1_HEADER, cached("c1", lambda: criterion1_rows(pool_))[0]),
        "c2": _csv_bytes(C2_HEADER, cached("c2", lambda: criterion2_rows(pool_))[0]),
        "c3": _csv_bytes(C3_HEADER, cached("c3", criterion3_rows)[0]),
        "c4": _csv_bytes(C4_HEADER, cached("c4", criterion4_rows)[0]),
        "c5": _csv_bytes(C5_HEADER, cached("c5", lambda: criterion5_rows(pool_))[0]),
    }
    fresh_pool, _ = build_pool()
    second = {
        "c1": _csv_bytes(C1_HEADER, criterion1_rows(fresh_pool)),
        "c2": _csv_bytes(C2_HEADER, criterion2_rows(fresh_pool)),
        "c3": _csv_bytes(C3_HEADER, criterion3_rows()),
        "c4": _csv_bytes(C4_HEADER, criterion4_rows()),
        "c5": _csv_bytes(C5_HEADER, criterion5_rows(fresh_pool)),
    }
    same = {key: first[key] == second[key] for key in first}
    # criterion 6: rerun a spread of trials serially and compare the records CSV
    cfg, records = desk_sweep["cfg"], desk_sweep["records"]
    subset = [0, cfg.trials_per_k // 2, cfg.trials_per_k - 1]
    old = [r for r in records if r.trial in subset]
    new = [r for t in subset for r in run_trial(cfg, t)]
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    write_records_csv(old, pa, cfg)
    write_records_csv(new, pb, cfg)
    same["c6_trials"] = pa.read_bytes() == pb.read_bytes()
    ok = all(same.values())
    report(7, ok, "bit-identical CSV on rerun: " + ", ".join(
        f"{k}={'yes' if v else 'NO'}" for k, v in same.items())
        + f" (sweep trials {subset} re-solved)")
    assert ok


# -- property suites -------------------------------------------------------------------

COUNTS = {}
SHAPES = [(10, 20, 4), (6, 10, 2), (8, 14, 3), (12, 20, 5)]


def _count(name):
    COUNTS[name] = COUNTS.get(name, 0) + 1


@settings(SLOW, max_examples=250)
@given(seed=st.integers(0, 10**6), alpha=st.sampled_from([1.0, 2.0, np.inf]),
       shape=st.sampled_from(SHAPES))
def suite_subgradient_membership(seed, alpha, shape):
    m, n, k = shape
    _, inst, found = usable_instance(seed, m, n, k, alphas=(alpha,), stream=13)
    cert, v = found[alpha]
    J, p, beta = cert.J, cert.p, cert.beta
    assert not np.any(np.delete(v, J))
    g = inst.Phi[:, J] @ v[J]
    assert subdiff_distance(g, p, beta) <= 1e-6
    if beta == 2:
        np.testing.assert_allclose(g, p / np.linalg.norm(p), atol=1e-6)
    elif beta == 1:
        S = np.flatnonzero(p)
        np.testing.assert_allclose(g[S], np.sign(p[S]), atol=1e-6)
        assert np.abs(g).max() <= 1 + 1e-6
    else:
        Z = np.flatnonzero(np.abs(p) >= np.abs(p).max() * (1 - 1e-9))
        off = np.setdiff1d(np.arange(inst.m), Z)
        assert np.abs(g[off]).max(initial=0.0) <= 1e-6
        assert abs(g[Z] @ np.sign(p[Z]) - 1.0) <= 1e-6
        assert np.all(g[Z] * np.sign(p[Z]) >= -1e-6)
    _count("subgradient")


@settings(SLOW, max_examples=200)
@given(seed=st.integers(0, 10**6), alpha=st.sampled_from([1.0, 2.0, np.inf]))
def suite_sign_relation(seed, alpha):
    _, inst, found = usable_instance(seed, 10, 20, 4, alphas=(alpha,), stream=17)
    cert, v = found[alpha]
    eta = inst.Phi.T @ cert.p
    Jt = cert.J_excess
    assert np.all(np.abs(np.abs(eta[Jt]) - 1.0) <= cert.sat_tolerance)
    np.testing.assert_array_equal(np.sign(v[Jt]), -np.sign(eta[Jt]))
    _count("sign")


record_st = st.tuples(st.integers(0, 9), st.sampled_from([2, 4, 6]),
                      st.sampled_from([0.0, 0.5, 1.0]), st.booleans(), st.integers(0, 8))


@settings(SLOW, max_examples=150)
@given(raw=st.lists(record_st, min_size=1, max_size=60),
       s_e=st.lists(st.integers(0, 8), min_size=1, max_size=4))
def suite_nested_monotonicity(raw, s_e):
    records = [TrialRecord(t, t, k, ident, inv, 1 / inv if inv else math.inf,
                           excess_size=ex if ident else None)
               for t, k, inv, ident, ex in raw]
    levels = sorted(set(float(s) for s in s_e)) + [math.inf]
    rows = probability_curves(records, levels)
    by_key = {}
    for r in rows:
        by_key.setdefault((r["inv_alpha"], r["k"]), []).append((r["s_e"], r["prob"]))
    for (inv, k), seq in by_key.items():
        probs = [p for _, p in sorted(seq)]
        assert all(a <= b for a, b in zip(probs, probs[1:]))
        group = [r for r in records if r.inv_alpha == inv and r.k == k]
        assert probs[-1] == sum(r.identifiable for r in group) / len(group)
    _count("nested")


@settings(SLOW, max_examples=200)
@given(seed=st.integers(0, 10**6), m=st.integers(2, 8), extra=st.integers(0, 6),
       alpha=st.sampled_from([1.0, 2.0, np.inf]), frac=st.floats(0.05, 0.95))
def suite_weak_duality(seed, m, extra, alpha, frac):
    # n >= m keeps the primal feasible for every tau > 0
    n = m + extra
    rng = CounterRNG(seed, 19)
    Phi = gaussian_design(m, n, rng)
    y = gaussian_design(m, 1, rng)[:, 0]
    tau = frac * lp_norm(y, alpha)
    beta = {1.0: np.inf, 2.0: 2.0, np.inf: 1.0}[alpha]
    primal = solve_primal(Phi, y, alpha, tau)
    dual = solve_dual(Phi, y, beta, tau)
    assert primal.status == dual.status == "Optimal"
    x, p = primal.primal, dual.primal
    assert lp_norm(Phi @ x - y, alpha) <= tau * (1 + 1e-7) + 1e-12
    assert np.abs(Phi.T @ p).max() <= 1 + 1e-9
    assert primal.objective >= -dual.objective - 1e-9
    # any other feasible dual point lower-bounds the primal as well
    q = gaussian_design(m, 1, rng)[:, 0]
    q = q / np.abs(Phi.T @ q).max()
    assert np.abs(x).sum() >= y @ q - tau * lp_norm(q, beta) - 1e-9
    _count("duality")


@settings(SLOW, max_examples=200)
@given(seed=st.integers(0, 10**6), m=st.integers(1, 8), n=st.integers(1, 8),
       rank=st.integers(0, 8), scale=st.integers(-3, 3))
def suite_moore_penrose(seed, m, n, rank, scale):
    rng = CounterRNG(seed, 23)
    r = min(rank, m, n)
    A = gaussian_design(m, r, rng) @ gaussian_design(r, n, rng) if r else np.zeros((m, n))
    A = A * 10.0 ** scale
    P = pseudo_inverse(A)
    na, npi = np.linalg.norm(A), np.linalg.norm(P)
    assert P.shape == (n, m)
    assert np.linalg.norm(A @ P @ A - A) <= 1e-10 * max(na, 1e-300)
    assert np.linalg.norm(P @ A @ P - P) <= 1e-10 * max(npi, 1e-300)
    assert np.linalg.norm((A @ P).T - A @ P) <= 1e-10
    assert np.linalg.norm((P @ A).T - P @ A) <= 1e-10
    _count("moore_penrose")


def test_criterion_8_property_suites():
    COUNTS.clear()
    t0 = time.perf_counter()
    failures = []
    for suite in (suite_subgradient_membership, suite_sign_relation,
                  suite_nested_monotonicity, suite_weak_duality, suite_moore_penrose):
        try:
            suite()
        except Exception as exc:  # report every suite before failing
            failures.append(f"{suite.__name__}: {type(exc).__name__}: {exc}")
    elapsed = time.perf_counter() - t0
    total = sum(COUNTS.values())
    ok = not failures and total >= 1000 and elapsed <= 300
    report(8, ok, f"{total} passing cases ({COUNTS}); {elapsed:.1f}s (<=300s)"
                  + (f"; failures: {failures}" if failures else ""))
    assert ok
