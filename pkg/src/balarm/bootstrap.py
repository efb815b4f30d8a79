"""Parametric bootstrap bands for the cyclostationary curves of a fitted model."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from . import rng as _rng
from .alarm import cyclo_curves, simulate_balarm
from .em import EMSettings, align_labels, fit_em
from .exceptions import BalarmError, FitError, ValidationError
from .model import BalarmModel

logger = logging.getLogger(__name__)

QUANTILES = (0.025, 0.5, 0.975)
RHO_THRESHOLD = 0.04
MAX_FAILURE_FRACTION = 0.2


@dataclass(frozen=True)
class BootstrapBands:
    """Pointwise bootstrap quantiles of ``p`` and ``rho`` curves, per cluster.

    Curve arrays are ``G x P``.  ``rho_*`` rows are NaN for clusters whose
    fitted maximum probability does not exceed the reporting threshold
    (``rho_reported`` is then False).  ``params`` holds one row per successful
    replicate: the aligned mixing weights followed by every cluster vector.
    """

    p_lo: np.ndarray
    p_med: np.ndarray
    p_hi: np.ndarray
    p_fit: np.ndarray
    rho_lo: np.ndarray
    rho_med: np.ndarray
    rho_hi: np.ndarray
    rho_fit: np.ndarray
    rho_reported: np.ndarray
    params: np.ndarray
    n_replicates: int
    n_failed: int
    failures: list = field(default_factory=list)

    @property
    def rho_bias(self) -> np.ndarray:
        """Mean over the day of ``rho_med - rho_fit`` (NaN where not reported)."""
        out = np.full(self.rho_fit.shape[0], np.nan)
        ok = self.rho_reported
        out[ok] = np.nanmean(self.rho_med[ok] - self.rho_fit[ok], axis=1)
        return out


def _curves(model: BalarmModel):
    cs = [cyclo_curves(cl, model.spec) for cl in model.clusters]
    return np.stack([c.p_curve for c in cs]), np.stack([c.rho_curve for c in cs])


def _replicate(model, J, n, b, seed, settings, t_first, phase_offset, burn_in):
    rep_seed = _rng.seed_sequence(seed, _rng.REPLICATES, b)
    panel, _ = simulate_balarm(model, J, n, rep_seed, burn_in=burn_in, t_first=t_first,
                               phase_offset=phase_offset)
    try:
        fit = fit_em(panel, model.spec, settings, seed=rep_seed, init_model=model)
        aligned = fit.model.reorder(align_labels(model, fit.model))
        p, rho = _curves(aligned)
    except BalarmError as exc:
        return None, f"replicate {b}: {exc}"
    vec = np.concatenate([aligned.pi, aligned.coef_matrix().ravel()])
    return (vec, p, rho), None


def parametric_bootstrap(model: BalarmModel, J: int, n: int, B: int, seed=0,
                         settings: Optional[EMSettings] = None,
                         rho_threshold: float = RHO_THRESHOLD, n_jobs: int = 1,
                         t_first: int = 1, phase_offset: float = 0.0,
                         burn_in: Optional[int] = None) -> BootstrapBands:
    """Simulate ``B`` panels from ``model``, refit each from ``model`` and summarise.

    Replicate ``b`` uses the stream ``(seed, b)`` for simulation, is refitted
    with a single EM run initialised at ``model``, and is label-aligned to
    ``model`` before its curves enter the pointwise 2.5/50/97.5% quantiles.
    Failed replicates are dropped and counted.

    Raises
    ------
    FitError
        If more than 20% of the replicates fail.
    """
    if B < 1:
        raise ValidationError("B must be >= 1")
    if model.spec.ar_order > 1:
        raise ValidationError("bootstrap curves need ar_order <= 1")
    settings = settings or EMSettings()
    settings = EMSettings(**{**settings.as_dict(), "init": "model", "n_restarts": 1})
    results = Parallel(n_jobs=n_jobs)(
        delayed(_replicate)(model, J, n, b, seed, settings, t_first, phase_offset, burn_in)
        for b in range(B))
    ok = [r for r, _ in results if r is not None]
    failures = [msg for _, msg in results if msg is not None]
    if len(failures) > MAX_FAILURE_FRACTION * B:
        raise FitError(f"{len(failures)} of {B} bootstrap replicates failed", failures)
    if not ok:
        raise FitError("no bootstrap replicate succeeded", failures)
    params = np.stack([r[0] for r in ok])
    p_all = np.stack([r[1] for r in ok])
    rho_all = np.stack([r[2] for r in ok])
    p_lo, p_med, p_hi = np.quantile(p_all, QUANTILES, axis=0)
    rho_lo, rho_med, rho_hi = np.quantile(rho_all, QUANTILES, axis=0)
    p_fit, rho_fit = _curves(model)
    reported = p_fit.max(axis=1) > rho_threshold
    hide = ~reported
    for arr in (rho_lo, rho_med, rho_hi):
        arr[hide] = np.nan
    return BootstrapBands(p_lo, p_med, p_hi, p_fit, rho_lo, rho_med, rho_hi, rho_fit,
                          reported, params, B, len(failures), failures)
