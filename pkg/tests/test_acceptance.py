"""Acceptance criteria, one test (or a few) per criterion.

Each test records a ``PASS``/``FAIL`` line; the lines are printed as they
are produced and again in the terminal summary.  Criterion 9 needs the
public hospital contact log: point ``BALARM_HOSPITAL_DATA`` at the file.
"""
import itertools
import os
import time

import mpmath
import numpy as np
import pytest

from balarm.alarm import (SIMULATION_CLUSTERS, alarm1_stationary, cyclo_curves, simulate_alarm,
                          simulate_balarm, simulation_model)
from balarm.bootstrap import parametric_bootstrap
from balarm.diagnostics import geometric_run_test, ks_geometric
from balarm.em import (EMSettings, adjusted_rand_index, align_labels, e_step, fit_em,
                       observed_loglik)
from balarm.glm import logistic_gradient, logistic_objective, weighted_logistic_fit
from balarm.ingest import aggregate, read_contacts
from balarm.model import BalarmModel, ClusterParams, EdgePanel, ModelSpec, linear_predictor
from balarm.selection import sweep
from conftest import ACCEPTANCE_LINES, random_model

mpmath.mp.dps = 50


def report(criterion, passed, detail):
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'} ({detail})"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert passed, line


# --------------------------------------------------------------------------
# 1. closed-form stationary law
# --------------------------------------------------------------------------

# (b, c) -> (p, rho) listed with the criterion, and the printed simulation-study p values
LISTED = {"A": (0.672, 0.600, 0.67), "B": (0.045, 0.600, 0.045),
          "C": (0.0167, 0.599, 0.016), "D": (0.0062, 0.601, 0.006)}
PRINTED_DIGITS = {"A": 2, "B": 3, "C": 3, "D": 3}


def test_criterion_1_stationary_law():
    start = time.perf_counter()
    summaries = {k: alarm1_stationary(*SIMULATION_CLUSTERS[k]) for k in LISTED}
    elapsed = time.perf_counter() - start
    problems = []
    for name, (p_listed, rho_listed, p_printed) in LISTED.items():
        b, c = SIMULATION_CLUSTERS[name]
        p01 = 1 / (1 + mpmath.exp(-mpmath.mpf(c)))
        p11 = 1 / (1 + mpmath.exp(-mpmath.mpf(b) - mpmath.mpf(c)))
        p_hp, rho_hp = float(p01 / (1 + p01 - p11)), float(p11 - p01)
        s = summaries[name]
        if abs(s.marginal_p - p_hp) > 5e-4 or abs(s.lag1_rho - rho_hp) > 5e-4:
            problems.append(f"{name}: differs from high-precision value")
        if abs(s.marginal_p - p_listed) > 5e-4 or abs(s.lag1_rho - rho_listed) > 5e-4:
            problems.append(f"{name}: p={s.marginal_p:.5f} rho={s.lag1_rho:.4f} vs listed {p_listed}, {rho_listed}")
        # printed values agree to one unit in their last printed digit
        if abs(s.marginal_p - p_printed) >= 10.0 ** -PRINTED_DIGITS[name]:
            problems.append(f"{name}: p={s.marginal_p:.5f} vs printed {p_printed}")
        if abs(s.lag1_rho - 0.6) >= 0.05:
            problems.append(f"{name}: rho={s.lag1_rho:.4f} vs printed 0.6")
    if elapsed > 0.05:
        problems.append(f"runtime {elapsed:.3f}s")
    detail = "; ".join(problems) or ", ".join(
        f"{k}: p={summaries[k].marginal_p:.5f} rho={summaries[k].lag1_rho:.4f}" for k in LISTED)
    report(1, not problems, detail)


# --------------------------------------------------------------------------
# 2. simulation-study recovery
# --------------------------------------------------------------------------

def _balanced_panel(names, per_cluster, n, seed):
    """Exactly ``per_cluster`` edges of each named cluster."""
    rows, labels = [], []
    for g, name in enumerate(names):
        single = simulation_model(name)
        panel, _ = simulate_balarm(single, per_cluster, n, seed, edge_offset=g * per_cluster)
        rows.append(panel.values)
        labels.append(np.full(per_cluster, g))
    return EdgePanel(np.vstack(rows)), np.concatenate(labels)


def _replicates(names, n_rep=20, per_cluster=300, n=1200):
    truth = simulation_model(names)
    est, aris = [], []
    for r in range(n_rep):
        panel, labels = _balanced_panel(names, per_cluster, n, seed=1000 + r)
        fit = fit_em(panel, truth.spec, seed=r)
        model = fit.model.reorder(align_labels(truth, fit.model))
        est.append([[s.marginal_p, s.lag1_rho] for s in
                    (alarm1_stationary(cl.b[0], cl.c) for cl in model.clusters)])
        aris.append(adjusted_rand_index(labels, fit.hard_labels))
    return np.array(est), np.array(aris)


def test_criterion_2_recovery_AB():
    start = time.perf_counter()
    est, aris = _replicates("AB")
    elapsed = time.perf_counter() - start
    med = np.median(est, axis=0)
    checks = {
        "p_A": abs(med[0, 0] - 0.672) <= 0.02,
        "p_B": abs(med[1, 0] - 0.045) <= 0.01,
        "rho_A": abs(med[0, 1] - 0.6) <= 0.1,
        "rho_B": abs(med[1, 1] - 0.6) <= 0.1,
        "ARI": np.mean(aris >= 0.95) >= 0.9,
        "runtime": elapsed <= 600,
    }
    failed = [k for k, ok in checks.items() if not ok]
    detail = (f"A+B median p_A={med[0, 0]:.4f} p_B={med[1, 0]:.4f} rho_A={med[0, 1]:.3f} "
              f"rho_B={med[1, 1]:.3f}, ARI>=0.95 in {np.mean(aris >= 0.95):.0%}, {elapsed:.0f}s"
              + (f"; failed: {', '.join(failed)}" if failed else ""))
    report("2 (A+B)", not failed, detail)


def test_criterion_2_unreliable_D():
    """Interquartile range of the cluster-D autocorrelation estimate over 20 replicates."""
    est, aris = _replicates("AD")
    rho_d = est[:, 1, 1]
    q1, q3 = np.quantile(rho_d, [0.25, 0.75])
    detail = (f"A+D rho_D range [{rho_d.min():.3f}, {rho_d.max():.3f}], IQR={q3 - q1:.4f} "
              f"(required >= 0.3), median ARI={np.median(aris):.3f}")
    report("2 (A+D)", q3 - q1 >= 0.3, detail)


# --------------------------------------------------------------------------
# 3. cyclostationary curves against long simulation
# --------------------------------------------------------------------------

def test_criterion_3_curves_match_simulation():
    start = time.perf_counter()
    spec = ModelSpec(ar_order=1, harmonic_order=3, period=288)
    params = ClusterParams([0.8, 0.4, 0.3, -0.2, 0.1, 0.1], [3.0], -1.5)
    days = 20_000
    P = spec.period
    # start at time of day 0 so that column s of the reshaped path is phase s
    x = simulate_alarm(params, spec, days * P, seed=2024, t_first=0).reshape(days, P).astype(float)
    curves = cyclo_curves(params, spec)
    freq = x.mean(axis=0)
    se = np.sqrt(curves.p_curve * (1 - curves.p_curve) / days)
    within = np.abs(freq - curves.p_curve) <= 3 * se
    prev = np.column_stack([np.concatenate([[np.nan], x[:-1, -1]]), x[:, :-1]])
    rho_emp = np.empty(P)
    for s in range(P):
        a, b = prev[:, s], x[:, s]
        ok = np.isfinite(a)
        rho_emp[s] = np.corrcoef(a[ok], b[ok])[0, 1]
    mask = curves.p_curve >= 0.02
    rho_err = np.max(np.abs(rho_emp[mask] - curves.rho_curve[mask]))
    elapsed = time.perf_counter() - start
    passed = within.mean() >= 0.99 and rho_err <= 0.02 and elapsed <= 120
    report(3, passed, f"p within 3 SE at {within.sum()}/{P} points, max |rho error|={rho_err:.4f} "
                      f"over {mask.sum()} points, {elapsed:.0f}s")


# --------------------------------------------------------------------------
# 4. EM properties
# --------------------------------------------------------------------------

def _enumeration_oracle(x, model, t0):
    total = mpmath.mpf(0)
    for g, cl in enumerate(model.clusters):
        lik = mpmath.mpf(model.pi[g])
        for l in range(model.spec.ar_order, len(x)):
            hist = [x[l - k] for k in range(1, model.spec.ar_order + 1)]
            p1 = 1 / (1 + mpmath.exp(-mpmath.mpf(linear_predictor(hist, t0 + l, cl, model.spec))))
            lik *= p1 if x[l] else 1 - p1
        total += lik
    return float(mpmath.log(total))


def test_criterion_4_em_properties():
    worst_step, worst_enum, worst_rows, worst_perm = 0.0, 0.0, 0.0, 0.0
    for r in range(100):
        gen = np.random.default_rng(r)
        G, K, H = int(gen.integers(1, 4)), int(gen.integers(1, 3)), int(gen.integers(0, 3))
        model = random_model(gen, G, K, H, int(gen.choice([6, 12, 24])))
        panel, _ = simulate_balarm(model, int(gen.integers(20, 120)), int(gen.integers(30, 200)), seed=r)
        settings = EMSettings(init=str(gen.choice(["random", "kmeans"])), n_restarts=1, tol=1e-9)
        fit = fit_em(panel, model.spec, settings, seed=r)
        if fit.loglik_trace.size > 1:
            worst_step = min(worst_step, float(np.diff(fit.loglik_trace).min()))
        tau = e_step(panel, model)
        worst_rows = max(worst_rows, float(np.max(np.abs(tau.sum(axis=1) - 1))))
        perm = gen.permutation(G)
        edges = gen.permutation(panel.n_edges)
        worst_perm = max(worst_perm,
                         abs(observed_loglik(panel.subset(edges), model.reorder(perm)) - observed_loglik(panel, model))
                         / max(1.0, panel.n_edges),
                         float(np.max(np.abs(e_step(panel, model.reorder(perm)) - tau[:, perm]))))
    for r in range(6):
        gen = np.random.default_rng(500 + r)
        model = random_model(gen, 3, int(gen.integers(1, 3)), 1, 5)
        n, K = 8, model.spec.ar_order
        X = np.array([[0] * K + list(t) for t in itertools.product([0, 1], repeat=n - K)])
        panel = EdgePanel(X)
        for i in range(0, len(X), 7):
            worst_enum = max(worst_enum, abs(observed_loglik(panel.subset([i]), model)
                                             - _enumeration_oracle(list(X[i]), model, 1)))
    passed = worst_step >= -1e-8 and worst_enum <= 1e-12 and worst_rows <= 1e-10 and worst_perm <= 1e-10
    report(4, passed, f"min trace step={worst_step:.2e}, enumeration error={worst_enum:.2e}, "
                      f"row-sum error={worst_rows:.2e}, permutation error={worst_perm:.2e}")


# --------------------------------------------------------------------------
# 5. GLM properties
# --------------------------------------------------------------------------

def test_criterion_5_glm_properties():
    worst_grad, worst_fd = 0.0, 0.0
    for r in range(50):
        gen = np.random.default_rng(r)
        m, p = int(gen.integers(20, 200)), int(gen.integers(1, 6))
        X = np.column_stack([gen.normal(size=(m, p - 1)), np.ones(m)])
        y = (gen.random(m) < 1 / (1 + np.exp(-X @ gen.normal(0, 0.7, p)))).astype(float)
        w = gen.uniform(0.1, 3.0, m)
        ridge = float(gen.choice([1e-6, 1e-3, 0.1]))
        fit = weighted_logistic_fit(X, y, w, ridge=ridge)
        if fit.converged:
            worst_grad = max(worst_grad, float(np.max(np.abs(logistic_gradient(fit.coef, X, y, w, ridge)))))
        beta = gen.normal(0, 0.5, p)
        g = logistic_gradient(beta, X, y, w, ridge)
        h = 1e-6
        fd = np.array([(logistic_objective(beta + h * e, X, y, w, ridge)
                        - logistic_objective(beta - h * e, X, y, w, ridge)) / (2 * h) for e in np.eye(p)])
        worst_fd = max(worst_fd, float(np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-12)))
    y = np.array([1.0, 0.0, 0.0, 0.0] * 25)
    intercept = weighted_logistic_fit(np.ones((100, 1)), y, np.ones(100)).coef[0]
    exact = float(mpmath.log(mpmath.mpf(1) / 3))
    err = abs(intercept - exact)
    passed = worst_grad <= 1e-8 and worst_fd <= 1e-4 and err <= 1e-10
    report(5, passed, f"max gradient at convergence={worst_grad:.2e}, finite-difference rel. error="
                      f"{worst_fd:.2e}, intercept error={err:.2e}")


# --------------------------------------------------------------------------
# 6. BIC selection
# --------------------------------------------------------------------------

def test_criterion_6_bic_selects_two():
    picks = []
    for r in range(20):
        panel, _ = _balanced_panel("AB", 300, 1200, seed=2000 + r)
        rows = sweep(panel, [1, 2, 3, 4], [0], seed=r)
        picks.append([row.G for row in rows if row.best][0])
    share = np.mean(np.array(picks) == 2)
    report(6, share >= 0.8, f"BIC chose G=2 in {share:.0%} of 20 seeds (choices {sorted(set(picks))})")


# --------------------------------------------------------------------------
# 7. bootstrap calibration
# --------------------------------------------------------------------------

def test_criterion_7_bootstrap_coverage():
    start = time.perf_counter()
    spec = ModelSpec(n_clusters=2, ar_order=1, harmonic_order=3, period=288)
    truth = BalarmModel(spec, [0.3, 0.7], (
        ClusterParams([-1.6, 0.2, -0.7, 0.0, 0.4, 0.0], [3.5], -5.15),   # two daily peaks, max p ~ 0.061
        ClusterParams([-0.5, 0.0, -0.2, 0.0, 0.0, 0.0], [2.5], -7.0)))
    p_true = cyclo_curves(truth.clusters[0], spec).p_curve
    panel, _ = simulate_balarm(truth, 400, 1152, seed=77)
    fit = fit_em(panel, spec, seed=7)
    fitted = fit.model.reorder(align_labels(truth, fit.model))
    bands = parametric_bootstrap(fitted, panel.n_edges, panel.n_steps, B=100, seed=8)
    covered = (bands.p_lo[0] <= p_true) & (p_true <= bands.p_hi[0])
    elapsed = time.perf_counter() - start
    report(7, covered.mean() >= 0.85 and elapsed <= 1800,
           f"true max p={p_true.max():.4f}, bands cover the true curve at {covered.mean():.1%} of 288 points, "
           f"{bands.n_failed} failed replicates, {elapsed:.0f}s")


# --------------------------------------------------------------------------
# 8. diagnostics calibration
# --------------------------------------------------------------------------

def test_criterion_8_run_test_calibration():
    n_mc = 199
    gen = np.random.default_rng(8)
    iid = [geometric_run_test((gen.random(1200) < 0.3).astype(int), n_mc=n_mc, seed=s)[1] for s in range(500)]
    geo = [ks_geometric(gen.geometric(0.3, 250), n_mc=n_mc, seed=10_000 + s)[1] for s in range(500)]
    b, c = SIMULATION_CLUSTERS["A"]
    spec = ModelSpec()
    power = [geometric_run_test(simulate_alarm(ClusterParams([], [b], c), spec, 1200, seed=s),
                                n_mc=n_mc, seed=s)[1] for s in range(100)]
    r_iid, r_geo = np.mean(np.array(iid) <= 0.05), np.mean(np.array(geo) <= 0.05)
    r_pow = np.mean(np.array(power) <= 0.05)
    passed = abs(r_iid - 0.05) <= 0.03 and abs(r_geo - 0.05) <= 0.03 and r_pow >= 0.9
    report(8, passed, f"null rejection {r_iid:.3f} (iid series) and {r_geo:.3f} (geometric runs), "
                      f"power against cluster A {r_pow:.2f}")


# --------------------------------------------------------------------------
# 9. hospital pipeline (needs the public data file)
# --------------------------------------------------------------------------

HOSPITAL = os.environ.get("BALARM_HOSPITAL_DATA")


def test_criterion_9_hospital_pipeline():
    if not HOSPITAL or not os.path.exists(HOSPITAL):
        ACCEPTANCE_LINES.append("criterion 9: SKIP (set BALARM_HOSPITAL_DATA to the hospital contact log)")
        pytest.skip("hospital contact log not supplied")
    events, registry = read_contacts(HOSPITAL)
    panel = aggregate(events, registry, 300)
    shape_ok = (registry.n_nodes, panel.n_edges, panel.n_steps) == (75, 2775, 1159)
    spec = ModelSpec(n_clusters=6, ar_order=1, harmonic_order=3, period=288)
    fit = fit_em(panel, spec, seed=0)
    sizes = np.bincount(fit.hard_labels, minlength=6) / panel.n_edges
    max_p = np.array([cyclo_curves(cl, spec).p_curve.max() for cl in fit.model.clusters])
    lp_ok = np.any((sizes >= 0.6) & (max_p <= 0.005))
    hp_ok = np.any(max_p >= 0.03)
    report(9, shape_ok and lp_ok and hp_ok,
           f"N={registry.n_nodes} J={panel.n_edges} n={panel.n_steps}, cluster shares "
           f"{np.round(sizes, 3).tolist()}, max p {np.round(max_p, 4).tolist()}")
