"""BIC and grid sweeps over the number of clusters and harmonic order."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

from joblib import Parallel, delayed

from . import rng as _rng
from .em import EMSettings, fit_em
from .exceptions import BalarmError, ValidationError
from .model import EdgePanel, FitResult, ModelSpec

logger = logging.getLogger(__name__)


def n_parameters(spec: ModelSpec) -> int:
    """Free parameters: ``(G - 1) + G (2H + K + 1)``."""
    return spec.n_clusters - 1 + spec.n_clusters * spec.n_coefficients


def n_observations(panel: EdgePanel, spec: ModelSpec) -> int:
    """Conditioned Bernoulli observations ``J (n - K)``."""
    return panel.n_edges * (panel.n_steps - spec.ar_order)


def bic(fit: FitResult, panel: EdgePanel) -> float:
    """``-2 loglik + q log(J (n - K))``; lower is better."""
    spec = fit.model.spec
    return -2.0 * fit.loglik + n_parameters(spec) * math.log(n_observations(panel, spec))


@dataclass(frozen=True)
class SweepRow:
    G: int
    H: int
    loglik: float
    q: int
    n_obs: int
    bic: float
    converged: bool
    n_restarts_used: int
    best: bool = False
    error: str = ""
    fit: Optional[FitResult] = None


def _cell(panel, G, H, K, P, settings, seed):
    spec = ModelSpec(n_clusters=G, ar_order=K, harmonic_order=H, period=P)
    q, n_obs = n_parameters(spec), n_observations(panel, spec)
    try:
        fit = fit_em(panel, spec, settings, seed=_rng.derive_seed(seed, _rng.CELLS, G, H))
    except BalarmError as exc:
        logger.warning("sweep cell G=%d H=%d failed: %s", G, H, exc)
        return SweepRow(G, H, math.nan, q, n_obs, math.nan, False, 0, error=str(exc))
    used = len(fit.meta["restart_logliks"]) - len(fit.meta["failed_restarts"])
    return SweepRow(G, H, fit.loglik, q, n_obs, bic(fit, panel), fit.converged, used, fit=fit)


def sweep(panel: EdgePanel, G_list: Sequence[int], H_list: Sequence[int], K: int = 1,
          period: int = 288, settings: Optional[EMSettings] = None, seed=0,
          n_jobs: int = 1):
    """Fit every ``(G, H)`` combination and tabulate BIC.

    Each cell is an independent fit seeded from ``(seed, G, H)``, so results
    do not depend on ``n_jobs``.  Failed cells are kept with ``error`` set and
    NaN scores.  The row with the smallest BIC has ``best=True``.
    """
    if not G_list or not H_list:
        raise ValidationError("G_list and H_list must be non-empty")
    settings = settings or EMSettings()
    cells = [(int(G), int(H)) for G in G_list for H in H_list]
    rows = Parallel(n_jobs=n_jobs)(
        delayed(_cell)(panel, G, H, K, period, settings, seed) for G, H in cells)
    finite = [r for r in rows if math.isfinite(r.bic)]
    if finite:
        winner = min(finite, key=lambda r: r.bic)
        rows = [SweepRow(**{**r.__dict__, "best": r is winner}) for r in rows]
    return rows
