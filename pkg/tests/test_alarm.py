import mpmath
import numpy as np
import pytest

from balarm.alarm import (SIMULATION_CLUSTERS, alarm1_grid, alarm1_stationary, cyclo_curves,
                          lag_pattern_marginals, phase_table, simulate_alarm, simulate_balarm,
                          simulation_model)
from balarm.exceptions import ValidationError
from balarm.model import ClusterParams, ModelSpec

mpmath.mp.dps = 40


def _mp_stationary(b, c):
    """Two-state chain stationary law in 40-digit arithmetic."""
    p01 = 1 / (1 + mpmath.exp(-mpmath.mpf(c)))
    p11 = 1 / (1 + mpmath.exp(-(mpmath.mpf(b) + mpmath.mpf(c))))
    return float(p01 / (1 + p01 - p11)), float(p11 - p01)


@pytest.mark.parametrize("name", sorted(SIMULATION_CLUSTERS))
def test_stationary_matches_high_precision(name):
    b, c = SIMULATION_CLUSTERS[name]
    s = alarm1_stationary(b, c)
    p, rho = _mp_stationary(b, c)
    assert s.marginal_p == pytest.approx(p, abs=1e-14)
    assert s.lag1_rho == pytest.approx(rho, abs=1e-14)


def test_stationary_without_dependence():
    s = alarm1_stationary(0.0, -1.0)
    assert s.marginal_p == pytest.approx(0.2689414213699951, abs=1e-15)
    assert s.lag1_rho == 0.0


def test_grid_rows():
    g = alarm1_grid([0.0, 2.89], [-1.0])
    assert g.shape == (2, 4)
    assert g[1, 2] == pytest.approx(alarm1_stationary(2.89, -1.0).marginal_p)


def test_cyclo_curves_constant_without_harmonics():
    spec = ModelSpec(ar_order=1, harmonic_order=0, period=288)
    b, c = SIMULATION_CLUSTERS["A"]
    cc = cyclo_curves(ClusterParams([], [b], c), spec)
    s = alarm1_stationary(b, c)
    np.testing.assert_allclose(cc.p_curve, s.marginal_p, atol=1e-12)
    np.testing.assert_allclose(cc.rho_curve, s.lag1_rho, atol=1e-10)


def _periodic_oracle(params, spec):
    """Periodic solution from the one-period transition product (eigenvector)."""
    P = spec.period
    probs = phase_table(params, spec)  # (P, 2): success prob after 0 / after 1
    mats = [np.array([[1 - probs[s, 0], probs[s, 0]], [1 - probs[s, 1], probs[s, 1]]]) for s in range(P)]
    prod = np.eye(2)
    for s in range(P):
        prod = prod @ mats[s]
    w, v = np.linalg.eig(prod.T)
    pi = np.real(v[:, np.argmin(np.abs(w - 1))])
    pi = pi / pi.sum()  # law of x at time P-1 == time -1
    p = np.empty(P)
    dist = pi
    for s in range(P):
        dist = dist @ mats[s]
        p[s] = dist[1]
    return p


def test_cyclo_curves_match_eigenvector_oracle(harmonic_model):
    spec = harmonic_model.spec.replace(n_clusters=1)
    for cl in harmonic_model.clusters:
        np.testing.assert_allclose(cyclo_curves(cl, spec).p_curve, _periodic_oracle(cl, spec), atol=1e-11)


def test_cyclo_curves_reject_higher_order():
    spec = ModelSpec(ar_order=2)
    with pytest.raises(ValidationError):
        cyclo_curves(ClusterParams([], [1.0, 1.0], -1.0), spec)


def test_lag_pattern_marginals_k2_stationary():
    spec = ModelSpec(ar_order=2)
    cl = ClusterParams([], [1.5, -0.7], -0.4)
    m = lag_pattern_marginals(cl, spec)[0]
    probs = phase_table(cl, spec)[0]
    T = np.zeros((4, 4))
    for h in range(4):
        T[h, (h << 1) & 3] += 1 - probs[h]
        T[h, ((h << 1) | 1) & 3] += probs[h]
    w, v = np.linalg.eig(T.T)
    ref = np.real(v[:, np.argmin(np.abs(w - 1))])
    np.testing.assert_allclose(m, ref / ref.sum(), atol=1e-12)


def test_lag_pattern_marginals_agree_with_curves(harmonic_model):
    spec = harmonic_model.spec.replace(n_clusters=1)
    cl = harmonic_model.clusters[0]
    m = lag_pattern_marginals(cl, spec)
    p = cyclo_curves(cl, spec).p_curve
    # pattern before phase s holds x at phase s-1
    np.testing.assert_allclose(m[:, 1], np.roll(p, 1), atol=1e-11)


def test_simulate_alarm_deterministic_and_init():
    spec = ModelSpec(ar_order=2)
    cl = ClusterParams([], [1.0, 0.5], -1.0)
    a = simulate_alarm(cl, spec, 500, seed=7)
    np.testing.assert_array_equal(a, simulate_alarm(cl, spec, 500, seed=7))
    assert not np.array_equal(a, simulate_alarm(cl, spec, 500, seed=8))
    x = simulate_alarm(cl, spec, 50, seed=1, init=[1, 0])
    assert list(x[:2]) == [1, 0]
    with pytest.raises(ValidationError):
        simulate_alarm(cl, spec, 50, seed=1, init=[1])


def test_simulate_alarm_long_run_frequency():
    b, c = SIMULATION_CLUSTERS["A"]
    spec = ModelSpec(ar_order=1)
    x = simulate_alarm(ClusterParams([], [b], c), spec, 200_000, seed=3)
    s = alarm1_stationary(b, c)
    assert x.mean() == pytest.approx(s.marginal_p, abs=0.01)
    r = np.corrcoef(x[:-1], x[1:])[0, 1]
    assert r == pytest.approx(s.lag1_rho, abs=0.01)


def test_simulate_balarm_shapes_and_determinism():
    model = simulation_model("AB")
    panel, labels = simulate_balarm(model, 50, 200, seed=11)
    assert panel.values.shape == (50, 200)
    np.testing.assert_array_equal(panel.timestamps, np.arange(1, 201))
    assert set(labels) <= {0, 1}
    again, labels2 = simulate_balarm(model, 50, 200, seed=11)
    np.testing.assert_array_equal(panel.values, again.values)
    np.testing.assert_array_equal(labels, labels2)
    # edge i depends only on (seed, i): a longer panel starts with the same rows
    more, labels3 = simulate_balarm(model, 80, 200, seed=11)
    same = labels3[:50] == labels
    np.testing.assert_array_equal(more.values[:50][same], panel.values[same])


def test_simulate_balarm_cluster_means():
    model = simulation_model("AB")
    panel, labels = simulate_balarm(model, 400, 1200, seed=5)
    for g, name in enumerate("AB"):
        mean = panel.values[labels == g].mean()
        assert mean == pytest.approx(alarm1_stationary(*SIMULATION_CLUSTERS[name]).marginal_p, abs=0.02)


def test_simulate_balarm_validates():
    with pytest.raises(ValidationError):
        simulate_balarm(simulation_model("AB"), 0, 10, seed=0)
    with pytest.raises(ValidationError):
        simulate_balarm(simulation_model("AB"), 5, 1, seed=0)
