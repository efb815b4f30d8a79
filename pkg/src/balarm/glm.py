"""Design construction and weighted, ridge-penalised logistic regression.

Covariate layout of a design row: the ``2H`` harmonics, then the lags
``x_{l-1} .. x_{l-K}``, then a constant 1 (so the intercept is the last
coefficient and the only unpenalised one).

Because the covariates of row ``(i, l)`` depend only on the phase
``t_l mod P`` and the lag pattern, a panel compresses into per-edge counts
over at most ``P * 2**K`` distinct covariate cells (:func:`summarize_panel`).
The EM code works on those counts; :func:`build_design` produces the
uncompressed rows.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List

import numpy as np

from .exceptions import SeparationError, ValidationError
from .model import EdgePanel, ModelSpec, harmonic_basis, inv_logit, softplus

logger = logging.getLogger(__name__)

DEFAULT_RIDGE = 1e-6
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100
MAX_HALVINGS = 60


@dataclass(frozen=True)
class DesignRows:
    """Design rows ``l = K+1..n`` of one edge (covariates, response, weight)."""

    covariates: np.ndarray
    response: np.ndarray
    weight: np.ndarray


@dataclass(frozen=True)
class PanelStats:
    """Per-edge counts over distinct covariate cells.

    ``ones[i, m]`` counts the rows of edge ``i`` in cell ``m`` with response 1
    and ``totals[i, m]`` all rows of edge ``i`` in that cell.
    """

    covariates: np.ndarray
    ones: np.ndarray
    totals: np.ndarray
    spec: ModelSpec

    @property
    def n_edges(self) -> int:
        return self.ones.shape[0]

    @property
    def n_obs(self) -> int:
        return int(self.totals.sum())


@dataclass(frozen=True)
class LogisticFit:
    coef: np.ndarray
    converged: bool
    n_iter: int
    grad_norm: float
    objective: float
    ridge: float


def _check_panel(panel: EdgePanel, spec: ModelSpec) -> None:
    if panel.n_steps <= spec.ar_order:
        raise ValidationError(f"need n > K (n={panel.n_steps}, K={spec.ar_order})")


def build_design(panel: EdgePanel, spec: ModelSpec) -> List[DesignRows]:
    """Explicit design rows of every edge, with unit weights."""
    _check_panel(panel, spec)
    K, n = spec.ar_order, panel.n_steps
    f = harmonic_basis(panel.harmonic_times()[K:], spec.harmonic_order, spec.period)
    out = []
    for x in panel.values:
        x = x.astype(float)
        lags = [x[K - k:n - k] for k in range(1, K + 1)]
        cov = np.column_stack([f] + lags + [np.ones(n - K)])
        out.append(DesignRows(cov, x[K:], np.ones(n - K)))
    return out


def cell_covariates(spec: ModelSpec, phase_offset: float = 0.0) -> np.ndarray:
    """Covariates of every ``(phase, lag pattern)`` cell, row ``s * 2**K + h``."""
    S, K = spec.n_phases, spec.ar_order
    f = harmonic_basis(np.arange(S) + phase_offset, spec.harmonic_order, spec.period)
    h = np.arange(2 ** K)
    lags = ((h[:, None] >> np.arange(K)[None, :]) & 1).astype(float)
    return np.column_stack([
        np.repeat(f, 2 ** K, axis=0),
        np.tile(lags, (S, 1)),
        np.ones(S * 2 ** K),
    ])


def summarize_panel(panel: EdgePanel, spec: ModelSpec) -> PanelStats:
    """Compress a panel into per-edge cell counts (empty cells dropped)."""
    _check_panel(panel, spec)
    K, S = spec.ar_order, spec.n_phases
    x = panel.values.astype(np.int64)
    J, n = x.shape
    h = np.zeros((J, n - K), dtype=np.int64)
    for k in range(1, K + 1):
        h += x[:, K - k:n - k] << (k - 1)
    phase = np.mod(panel.timestamps[K:], S)
    n_cells = S * 2 ** K
    flat = (np.arange(J)[:, None] * n_cells + phase[None, :] * 2 ** K + h).ravel()
    totals = np.bincount(flat, minlength=J * n_cells).reshape(J, n_cells).astype(float)
    ones = np.bincount(flat, weights=x[:, K:].ravel().astype(float),
                       minlength=J * n_cells).reshape(J, n_cells)
    keep = totals.sum(axis=0) > 0
    cov = cell_covariates(spec, panel.phase_offset)[keep]
    return PanelStats(cov, ones[:, keep], totals[:, keep], spec)


# --------------------------------------------------------------------------
# weighted logistic regression
# --------------------------------------------------------------------------

def _penalty_mask(p: int) -> np.ndarray:
    mask = np.ones(p)
    mask[-1] = 0.0
    return mask


def logistic_objective(beta, X, y, weights, ridge: float = 0.0) -> float:
    """``sum_j w_j [y_j eta_j - log(1 + e^eta_j)] - ridge/2 * |beta_{-intercept}|^2``."""
    beta = np.asarray(beta, dtype=float)
    eta = X @ beta
    pen = 0.5 * ridge * float(np.sum(_penalty_mask(beta.size) * beta ** 2))
    return float(np.sum(weights * (y * eta - softplus(eta)))) - pen


def logistic_gradient(beta, X, y, weights, ridge: float = 0.0) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    mu = inv_logit(X @ beta)
    return X.T @ (weights * (y - mu)) - ridge * _penalty_mask(beta.size) * beta


def weighted_logistic_fit(X, y, weights, init=None, ridge: float = DEFAULT_RIDGE,
                          tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> LogisticFit:
    """Maximise the ridge-penalised weighted Bernoulli log-likelihood by IRLS.

    Parameters
    ----------
    X : (m, p) array
        Design rows; the last column is the unpenalised intercept.
    y : (m,) array
        Responses in ``[0, 1]``.  Aggregated cells may pass the success
        proportion together with the cell count as weight.
    weights : (m,) array
        Non-negative row weights.
    init : (p,) array, optional
        Starting coefficients (zeros by default).
    ridge : float
        Penalty on all non-intercept coefficients.
    tol : float
        Convergence is declared once the gradient sup-norm is ``<= tol``.
    max_iter : int
        Newton iterations before giving up; the last iterate is returned
        with ``converged=False``.

    Each Newton step is halved until the penalised objective does not
    decrease, so the objective is monotone over accepted steps.

    Raises
    ------
    SeparationError
        If the weighted normal system is singular (typically separation).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(weights, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],) or w.shape != y.shape:
        raise ValidationError("inconsistent design dimensions")
    if not np.all(np.isfinite(w)) or np.any(w < 0) or not np.any(w > 0):
        raise ValidationError("weights must be finite, non-negative and not all zero")
    keep = w > 0
    X, y, w = X[keep], y[keep], w[keep]
    p = X.shape[1]
    beta = np.zeros(p) if init is None else np.array(init, dtype=float)
    if beta.shape != (p,):
        raise ValidationError(f"init must have {p} entries")
    mask = _penalty_mask(p)

    obj = logistic_objective(beta, X, y, w, ridge)
    grad = logistic_gradient(beta, X, y, w, ridge)
    it = 0
    while np.max(np.abs(grad)) > tol and it < max_iter:
        it += 1
        eta = X @ beta
        e = np.exp(-np.abs(eta))
        curv = w * e / (1.0 + e) ** 2
        hess = (X * curv[:, None]).T @ X + ridge * np.diag(mask)
        try:
            chol = np.linalg.cholesky(hess)
            step = np.linalg.solve(chol.T, np.linalg.solve(chol, grad))
        except np.linalg.LinAlgError as exc:
            raise SeparationError(f"singular weighted normal system at iteration {it}") from exc
        if not np.all(np.isfinite(step)):
            raise SeparationError(f"non-finite Newton step at iteration {it}")
        t = 1.0
        for _ in range(MAX_HALVINGS):
            cand = beta + t * step
            cand_obj = logistic_objective(cand, X, y, w, ridge)
            if cand_obj >= obj:
                break
            t *= 0.5
        else:
            logger.debug("IRLS line search stalled at iteration %d", it)
            break
        beta, obj = cand, cand_obj
        grad = logistic_gradient(beta, X, y, w, ridge)
    gnorm = float(np.max(np.abs(grad)))
    return LogisticFit(beta, gnorm <= tol, it, gnorm, obj, ridge)
