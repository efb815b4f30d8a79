"""Run-length and cross-correlation diagnostics for binary edge series.

Run-length convention: a maximal run of ``r`` zeros is ``r`` consecutive
failures, compared with ``Geometric(p)`` on ``{1, 2, ...}`` (trials up to and
including the first success), where ``p`` is the probability of a 1.  Runs
touching either end of the series are censored and left out of the tests.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import stats

from . import rng as _rng
from .alarm import simulate_balarm
from .exceptions import InsufficientDataError, ValidationError
from .model import BalarmModel, EdgePanel

DEFAULT_BINS = np.linspace(-1.0, 1.0, 41)
DEFAULT_MAX_PAIRS = 100_000


@dataclass(frozen=True)
class RunLengths:
    """Maximal runs of a binary series, in order of appearance."""

    states: np.ndarray
    lengths: np.ndarray
    censored: np.ndarray

    def runs(self, state: int, include_censored: bool = False) -> np.ndarray:
        sel = self.states == state
        if not include_censored:
            sel &= ~self.censored
        return self.lengths[sel]

    @property
    def off_runs(self) -> np.ndarray:
        return self.runs(0, include_censored=True)

    @property
    def on_runs(self) -> np.ndarray:
        return self.runs(1, include_censored=True)

    def reconstruct(self) -> np.ndarray:
        return np.repeat(self.states, self.lengths).astype(np.int8)


def run_lengths(series) -> RunLengths:
    """Split a binary series into maximal runs; the first and last are censored."""
    x = np.asarray(series).astype(np.int8).reshape(-1)
    if x.size == 0:
        raise ValidationError("series must be non-empty")
    if not np.all((x == 0) | (x == 1)):
        raise ValidationError("series must be binary")
    starts = np.flatnonzero(np.concatenate([[True], x[1:] != x[:-1]]))
    lengths = np.diff(np.append(starts, x.size))
    censored = np.zeros(starts.size, dtype=bool)
    censored[0] = censored[-1] = True
    return RunLengths(x[starts], lengths, censored)


def _check_p(p):
    if not 0.0 < p < 1.0:
        raise ValidationError(f"p must lie in (0, 1), got {p}")


def geometric_qq(runs, p: float) -> np.ndarray:
    """``(theoretical, sample)`` quantile pairs against ``Geometric(p)``.

    Sorted runs are paired with geometric quantiles at plotting positions
    ``(i - 0.5) / m``.
    """
    runs = np.sort(np.asarray(runs, dtype=float).reshape(-1))
    if runs.size == 0:
        raise ValidationError("runs must be non-empty")
    _check_p(p)
    m = runs.size
    probs = (np.arange(1, m + 1) - 0.5) / m
    return np.column_stack([stats.geom.ppf(probs, p), runs])


def ks_statistic(runs, p: float) -> float:
    """Sup distance between the empirical CDF of ``runs`` and ``Geometric(p)``.

    Both CDFs are right-continuous step functions jumping at integers, so the
    supremum is attained on ``1..max(runs)``.
    """
    runs = np.asarray(runs, dtype=np.int64).reshape(-1)
    support = np.arange(1, runs.max() + 1)
    ecdf = np.searchsorted(np.sort(runs), support, side="right") / runs.size
    cdf = -np.expm1(support * np.log1p(-p))
    return float(np.max(np.abs(ecdf - cdf)))


def ks_geometric(runs, p: Optional[float] = None, n_mc: int = 999, seed=0,
                 series_length: Optional[int] = None) -> Tuple[float, float]:
    """Kolmogorov-Smirnov type test of run lengths against ``Geometric(p)``.

    The p-value is calibrated by Monte Carlo, re-estimating ``p`` in every
    replicate the same way it was obtained for the data:

    * ``p=None``: ``p`` is the geometric MLE ``1 / mean(runs)``; replicates
      draw ``len(runs)`` geometric variables and re-estimate the MLE.
    * ``p`` given with ``series_length``: ``p`` is taken to be the mean of an
      iid series of that length whose interior off-runs are ``runs``;
      replicates simulate such series and re-estimate ``p`` by their mean.
    * ``p`` given alone: ``p`` is treated as known.

    Returns
    -------
    statistic, p_value
        ``p_value = (1 + #{D* >= D}) / (n_mc + 1)``.
    """
    runs = np.asarray(runs, dtype=np.int64).reshape(-1)
    if runs.size == 0:
        raise InsufficientDataError("no runs to test")
    if np.any(runs < 1):
        raise ValidationError("run lengths must be positive")
    if n_mc < 100:
        raise ValidationError("n_mc must be >= 100")
    estimate = p is None
    if estimate:
        p = 1.0 / runs.mean()
        if p >= 1.0:
            p = 1.0 - 1e-12
    _check_p(p)
    d_obs = ks_statistic(runs, p)
    gen = _rng.stream(seed)
    exceed = 0
    for _ in range(n_mc):
        if series_length is not None:
            x = (gen.random(series_length) < p).astype(np.int8)
            rep = run_lengths(x).runs(0)
            p_rep = x.mean()
            if rep.size == 0 or not 0.0 < p_rep < 1.0:
                exceed += 1  # degenerate replicate: counts against rejection
                continue
        else:
            rep = gen.geometric(p, size=runs.size)
            p_rep = min(1.0 / rep.mean(), 1.0 - 1e-12) if estimate else p
        if ks_statistic(rep, p_rep) >= d_obs:
            exceed += 1
    return d_obs, (1 + exceed) / (n_mc + 1)


def geometric_run_test(series, n_mc: int = 999, seed=0) -> Tuple[float, float]:
    """Test whether the interior off-runs of ``series`` are ``Geometric(mean(series))``.

    Serial dependence makes runs longer or shorter than independence allows,
    so this rejects for autocorrelated series.
    """
    x = np.asarray(series).reshape(-1)
    runs = run_lengths(x).runs(0)
    if runs.size == 0:
        raise InsufficientDataError("series has no interior off-runs")
    return ks_geometric(runs, float(x.mean()), n_mc=n_mc, seed=seed, series_length=x.size)


def independence_probe(series) -> Tuple[float, float, float]:
    """Compare the sample mean with the run-length estimate of the on-probability.

    ``p_hat_runs = 1 / mean(interior off-run length)`` is the geometric MLE of
    the probability of leaving state 0.  Under independence both estimate the
    same ``p``; positive dependence makes ``discrepancy = p_hat_mean - p_hat_runs``
    positive.  The probe has no power against alternatives that keep the two
    equal.
    """
    x = np.asarray(series).reshape(-1)
    runs = run_lengths(x).runs(0)
    if runs.size == 0:
        raise InsufficientDataError("series has no interior off-runs")
    p_mean = float(x.mean())
    p_runs = 1.0 / float(runs.mean())
    return p_mean, p_runs, p_mean - p_runs


# --------------------------------------------------------------------------
# cross-correlations
# --------------------------------------------------------------------------

def lagged_correlation(x, y, lag: int = 0) -> float:
    """Pearson correlation of ``x[l]`` with ``y[l + lag]``; NaN if either is constant."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = min(x.size, y.size)
    if lag < 0 or lag >= n - 1:
        raise ValidationError(f"lag must lie in [0, {n - 2}]")
    a, b = x[:n - lag], y[lag:n]
    a, b = a - a.mean(), b - b.mean()
    den = np.sqrt((a @ a) * (b @ b))
    return float(a @ b / den) if den > 0 else float("nan")


def _segments(X: np.ndarray, lag: int):
    """Standardised leading and lagged segments plus a usability mask."""
    X = np.asarray(X, dtype=float)
    n = X.shape[1]
    out, ok = [], np.ones(X.shape[0], dtype=bool)
    for seg in (X[:, :n - lag], X[:, lag:]):
        seg = seg - seg.mean(axis=1, keepdims=True)
        sd = np.sqrt((seg ** 2).mean(axis=1))
        ok &= sd > 0
        out.append(np.divide(seg, sd[:, None], out=np.zeros_like(seg), where=sd[:, None] > 0))
    return out[0], out[1], ok


def _group_correlations(A, B, lag, same, max_pairs, gen):
    za, _, ok_a = _segments(A, lag)
    _, zb, ok_b = _segments(B, lag)
    if same:
        ok_a = ok_b = ok_a & ok_b
    excluded = int((~ok_a).sum() + (0 if same else (~ok_b).sum()))
    za, zb = za[ok_a], zb[ok_b]
    na, nb = za.shape[0], zb.shape[0]
    n_pairs = na * (na - 1) // 2 if same else na * nb
    if n_pairs == 0:
        return None, excluded, 0
    if n_pairs <= max_pairs:
        if same:
            r, c = np.triu_indices(na, 1)
        else:
            r, c = np.divmod(np.arange(n_pairs), nb)
    else:
        r = gen.integers(0, na, size=max_pairs)
        c = gen.integers(0, nb, size=max_pairs)
        if same:
            clash = r == c
            while clash.any():
                c[clash] = gen.integers(0, nb, size=int(clash.sum()))
                clash = r == c
    L = za.shape[1]
    out = np.empty(r.size)
    for s in range(0, r.size, 20_000):
        sl = slice(s, s + 20_000)
        out[sl] = np.einsum("ij,ij->i", za[r[sl]], zb[c[sl]]) / L
    return np.clip(out, -1.0, 1.0), excluded, n_pairs


@dataclass(frozen=True)
class CrossCorrelations:
    """Correlations per cluster pair ``(g, h)``, ``g <= h``.

    ``excluded`` counts constant series dropped from a group; groups with
    fewer than two usable series are listed in ``skipped``.
    """

    values: Dict[Tuple[int, int], np.ndarray]
    excluded: Dict[Tuple[int, int], int]
    n_pairs: Dict[Tuple[int, int], int]
    skipped: tuple


def _pairwise(groups, lag, max_pairs, seed) -> CrossCorrelations:
    values, excluded, n_pairs, skipped = {}, {}, {}, []
    keys = sorted(groups)
    for g, h in combinations_with_replacement(keys, 2):
        gen = _rng.stream(seed, _rng.PAIRS, g, h)
        r, exc, total = _group_correlations(groups[g], groups[h], lag, g == h, max_pairs, gen)
        excluded[(g, h)] = exc
        n_pairs[(g, h)] = total
        if r is None:
            skipped.append((g, h))
        else:
            values[(g, h)] = r
    return CrossCorrelations(values, excluded, n_pairs, tuple(skipped))


def crosscorr_null(model: BalarmModel, m: int, n: int, lag: int = 0, seed=0,
                   max_pairs: int = DEFAULT_MAX_PAIRS, t_first: int = 1,
                   phase_offset: float = 0.0) -> CrossCorrelations:
    """Correlations between independently simulated series of every cluster pair.

    ``m`` series of length ``n`` are drawn from each cluster with no
    cross-edge dependence, so any correlation comes from shared daily
    patterns.  Pair counts beyond ``max_pairs`` are subsampled with a seeded
    stream.
    """
    if m < 2 or lag < 0:
        raise ValidationError("need m >= 2 and lag >= 0")
    spec = model.spec
    groups = {}
    for g in range(spec.n_clusters):
        single = BalarmModel(spec.replace(n_clusters=1), [1.0], (model.clusters[g],))
        panel, _ = simulate_balarm(single, m, n, _rng.seed_sequence(seed, _rng.NULL_SERIES, g),
                                   t_first=t_first, phase_offset=phase_offset)
        groups[g] = panel.values
    return _pairwise(groups, lag, max_pairs, seed)


def crosscorr_observed(panel: EdgePanel, labels, lag: int = 0, seed=0,
                       max_pairs: int = DEFAULT_MAX_PAIRS) -> CrossCorrelations:
    """Correlations between observed edges grouped by hard-label pair."""
    labels = np.asarray(labels, dtype=int)
    if labels.shape != (panel.n_edges,):
        raise ValidationError("need one label per edge")
    if lag < 0:
        raise ValidationError("lag must be >= 0")
    groups = {int(g): panel.values[labels == g] for g in np.unique(labels)}
    return _pairwise(groups, lag, max_pairs, seed)


def crosscorr_histograms(null: CrossCorrelations, observed: CrossCorrelations,
                         bins=DEFAULT_BINS):
    """Shared-bin histogram counts per cluster pair.

    Returns a dict ``(g, h) -> (edges, null_counts, observed_counts)``.
    """
    bins = np.asarray(bins, dtype=float)
    out = {}
    for key in sorted(set(null.values) | set(observed.values)):
        nc = np.histogram(null.values[key], bins)[0] if key in null.values else np.zeros(bins.size - 1, int)
        oc = np.histogram(observed.values[key], bins)[0] if key in observed.values else np.zeros(bins.size - 1, int)
        out[key] = (bins, nc, oc)
    return out
