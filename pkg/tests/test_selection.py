import math

import pytest

from balarm.alarm import simulate_balarm, simulation_model
from balarm.em import EMSettings, fit_em
from balarm.model import ModelSpec
from balarm.selection import bic, n_observations, n_parameters, sweep


def test_parameter_count():
    assert n_parameters(ModelSpec(n_clusters=6, ar_order=1, harmonic_order=3)) == 5 + 6 * 8
    assert n_parameters(ModelSpec(n_clusters=1, ar_order=1, harmonic_order=0)) == 2


@pytest.fixture(scope="module")
def ab_panel():
    panel, _ = simulate_balarm(simulation_model("AB"), 80, 300, seed=2)
    return panel


def test_bic_formula(ab_panel):
    spec = ModelSpec(n_clusters=2)
    fit = fit_em(ab_panel, spec, seed=0)
    assert n_observations(ab_panel, spec) == 80 * 299
    assert bic(fit, ab_panel) == pytest.approx(-2 * fit.loglik + 5 * math.log(80 * 299), rel=1e-14)


def test_sweep_table_and_winner(ab_panel):
    rows = sweep(ab_panel, [1, 2, 3], [0, 1], period=12, seed=3)
    assert [(r.G, r.H) for r in rows] == [(G, H) for G in (1, 2, 3) for H in (0, 1)]
    winners = [r for r in rows if r.best]
    assert len(winners) == 1 and winners[0].bic == min(r.bic for r in rows)
    assert winners[0].G == 2
    assert all(r.q == n_parameters(ModelSpec(n_clusters=r.G, harmonic_order=r.H)) for r in rows)


def test_sweep_independent_of_workers(ab_panel):
    a = sweep(ab_panel, [1, 2], [0], seed=4, n_jobs=1)
    b = sweep(ab_panel, [1, 2], [0], seed=4, n_jobs=2)
    assert [r.loglik for r in a] == [r.loglik for r in b]


def test_sweep_records_failed_cells(ab_panel):
    tiny = ab_panel.subset([0, 1])
    rows = sweep(tiny, [1, 3], [0], seed=0, settings=EMSettings(max_iter=5))
    failed = [r for r in rows if r.G == 3][0]
    assert failed.error and math.isnan(failed.bic) and not failed.best
    assert [r for r in rows if r.G == 1][0].best
