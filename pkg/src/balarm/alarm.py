"""Simulation and cyclostationary analysis of ALARM / BALARM processes.

The state needed to draw ``X_l`` is the phase ``s = t_l mod P`` and the lag
pattern ``h = sum_k x_{l-k} 2**(k-1)`` (bit ``k-1`` holds lag ``k``).  All
simulators precompute the success probability for every ``(s, h)`` cell and
then only do table lookups, which keeps long paths cheap.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import rng as _rng
from .exceptions import ConvergenceError, ValidationError
from .model import (BalarmModel, ClusterParams, EdgePanel, ModelSpec,
                    harmonic_basis, inv_logit)

CURVE_TOL = 1e-12
MAX_SWEEPS = 10_000

#: ALARM(1) processes of the simulation study: (b, c).
SIMULATION_CLUSTERS = {
    "A": (2.89, -1.0),
    "B": (4.48, -4.0),
    "C": (5.43, -5.0),
    "D": (6.42, -6.0),
}


@dataclass(frozen=True)
class StationarySummary:
    marginal_p: float
    lag1_rho: float


@dataclass(frozen=True)
class CycloCurves:
    """Time-of-day marginal probability and lag-1 autocorrelation.

    Entry ``l`` refers to time of day ``l`` steps after the phase origin.
    """

    p_curve: np.ndarray
    rho_curve: np.ndarray


def simulation_model(names: str = "AB", period: int = 288) -> BalarmModel:
    """Equal-weight ALARM(1) mixture of the named simulation-study clusters."""
    names = names.upper()
    spec = ModelSpec(n_clusters=len(names), ar_order=1, harmonic_order=0, period=period)
    clusters = tuple(ClusterParams([], [SIMULATION_CLUSTERS[n][0]], SIMULATION_CLUSTERS[n][1])
                     for n in names)
    return BalarmModel(spec, np.full(len(names), 1.0 / len(names)), clusters)


# --------------------------------------------------------------------------
# probability tables
# --------------------------------------------------------------------------

def lag_patterns(K: int) -> np.ndarray:
    """``2**K x K`` matrix whose row ``h`` lists ``(x_{l-1}, ..., x_{l-K})``."""
    h = np.arange(2 ** K)[:, None]
    return ((h >> np.arange(K)[None, :]) & 1).astype(float)


def phase_eta(params: ClusterParams, spec: ModelSpec, phase_offset: float = 0.0) -> np.ndarray:
    """Linear predictor for every ``(phase, lag pattern)`` cell, shape ``(S, 2**K)``."""
    params.check(spec)
    S = spec.n_phases
    eta = np.full((S, 2 ** spec.ar_order), params.c)
    if spec.ar_order:
        eta += (lag_patterns(spec.ar_order) @ params.b)[None, :]
    if spec.harmonic_order:
        f = harmonic_basis(np.arange(S) + phase_offset, spec.harmonic_order, spec.period)
        eta += (f @ params.a)[:, None]
    return eta


def phase_table(params: ClusterParams, spec: ModelSpec, phase_offset: float = 0.0) -> np.ndarray:
    """Success probability for every ``(phase, lag pattern)`` cell."""
    return inv_logit(phase_eta(params, spec, phase_offset))


def _encode(history) -> int:
    # history = (x_{l-1}, ..., x_{l-K})
    return sum(int(x) << k for k, x in enumerate(history))


def lag_pattern_marginals(params: ClusterParams, spec: ModelSpec, phase_offset: float = 0.0,
                          tol: float = CURVE_TOL, max_sweeps: int = MAX_SWEEPS) -> np.ndarray:
    """Cyclostationary law of the lag pattern, shape ``(S, 2**K)``.

    Row ``s`` is the distribution of ``(x_{l-1}, ..., x_{l-K})`` just before
    drawing a value at phase ``s``.  Found by iterating the periodic chain
    over whole periods until the sup-norm change drops below ``tol``.
    """
    probs = phase_table(params, spec, phase_offset)
    S, M = probs.shape
    K = spec.ar_order
    if K == 0:
        return np.ones((S, 1))
    mask = M - 1
    h = np.arange(M)
    to0, to1 = (h << 1) & mask, ((h << 1) | 1) & mask
    dist = np.full(M, 1.0 / M)
    out = np.full((S, M), np.nan)
    for _ in range(max_sweeps):
        prev = out.copy()
        for s in range(S):
            out[s] = dist
            new = np.zeros(M)
            np.add.at(new, to0, dist * (1.0 - probs[s]))
            np.add.at(new, to1, dist * probs[s])
            dist = new
        if np.max(np.abs(out - prev)) < tol:
            return out
    raise ConvergenceError(f"lag-pattern marginals did not converge in {max_sweeps} sweeps")


# --------------------------------------------------------------------------
# simulation
# --------------------------------------------------------------------------

def _phases(t_first: int, length: int, spec: ModelSpec) -> np.ndarray:
    return np.mod(np.arange(t_first, t_first + length), spec.n_phases)


def simulate_alarm(params: ClusterParams, spec: ModelSpec, n: int, seed,
                   init: Optional[Sequence[int]] = None, t_first: int = 1,
                   phase_offset: float = 0.0) -> np.ndarray:
    """Simulate one ALARM path of length ``n``.

    The first ``K`` values are ``init``; value ``l`` (0-based) sits at time
    ``t_first + l``.  Each later value is ``1`` when a uniform draw from the
    stream ``seed`` falls below its conditional success probability, so the
    output is a deterministic function of the inputs.  ``init=None`` draws
    the first ``K`` values from the cyclostationary lag-pattern law.
    """
    K = spec.ar_order
    if n <= K:
        raise ValidationError(f"need n > K (n={n}, K={K})")
    gen = _rng.stream(seed)
    if init is None:
        marg = lag_pattern_marginals(params, spec, phase_offset)
        s0 = (t_first + K) % spec.n_phases
        h = int(np.searchsorted(np.cumsum(marg[s0]), gen.random(), side="right"))
        h = min(h, 2 ** K - 1)
        init = [(h >> (K - 1 - l)) & 1 for l in range(K)]
    init = [int(v) for v in init]
    if len(init) != K or any(v not in (0, 1) for v in init):
        raise ValidationError(f"init must hold {K} binary values")
    probs = phase_table(params, spec, phase_offset).tolist()
    phases = _phases(t_first, n, spec).tolist()
    u = gen.random(n - K).tolist()
    mask = 2 ** K - 1
    x = init + [0] * (n - K)
    h = _encode(reversed(init))
    for l in range(K, n):
        xl = 1 if u[l - K] < probs[phases[l]][h] else 0
        x[l] = xl
        h = ((h << 1) | xl) & mask
    return np.array(x, dtype=np.int8)


def _simulate_rows(tables: np.ndarray, labels: np.ndarray, h0: np.ndarray,
                   phases: np.ndarray, u: np.ndarray, K: int) -> np.ndarray:
    """Vectorised path simulation over edges.

    ``tables`` is ``(G, S, 2**K)``, ``u`` is ``(J, L-K)``; returns ``(J, L)``.
    """
    J, steps = u.shape
    L = steps + K
    x = np.zeros((J, L), dtype=np.int8)
    for k in range(K):
        x[:, K - 1 - k] = (h0 >> k) & 1
    h = h0.copy()
    mask = 2 ** K - 1
    for l in range(K, L):
        p = tables[labels, phases[l], h]
        xl = (u[:, l - K] < p).astype(np.int64)
        x[:, l] = xl
        h = ((h << 1) | xl) & mask
    return x


def simulate_balarm(model: BalarmModel, J: int, n: int, seed, burn_in: Optional[int] = None,
                    t_first: int = 1, phase_offset: float = 0.0, edge_offset: int = 0):
    """Simulate a BALARM edge panel.

    Labels are drawn from ``Multinomial(pi)`` on stream ``(seed, LABELS)``.
    Edge ``i`` uses its own stream ``(seed, EDGES, edge_offset + i)``: one
    uniform picks the initial lag pattern from the cluster's cyclostationary
    law at the start time, the rest drive the path.  ``burn_in`` extra steps
    (default one period) are simulated before ``t_first`` and discarded.

    Returns
    -------
    panel : EdgePanel
    labels : ndarray of int
        True cluster of every edge (0-based).
    """
    spec = model.spec
    K = spec.ar_order
    if J < 1 or n <= K:
        raise ValidationError(f"need J >= 1 and n > K (J={J}, n={n}, K={K})")
    burn_in = spec.period if burn_in is None else int(burn_in)
    if burn_in < 0:
        raise ValidationError("burn_in must be >= 0")
    labels = _rng.stream(seed, _rng.LABELS).choice(spec.n_clusters, size=J, p=model.pi)
    labels = labels.astype(np.int64)
    start = t_first - burn_in
    L = burn_in + n
    tables = np.stack([phase_table(cl, spec, phase_offset) for cl in model.clusters])
    s0 = (start + K) % spec.n_phases
    cdfs = np.stack([np.cumsum(lag_pattern_marginals(cl, spec, phase_offset)[s0])
                     for cl in model.clusters])
    u = np.empty((J, L - K))
    h0 = np.empty(J, dtype=np.int64)
    for i in range(J):
        gen = _rng.stream(seed, _rng.EDGES, edge_offset + i)
        h0[i] = np.searchsorted(cdfs[labels[i]], gen.random(), side="right")
        u[i] = gen.random(L - K)
    h0 = np.minimum(h0, 2 ** K - 1)
    x = _simulate_rows(tables, labels, h0, _phases(start, L, spec), u, K)
    panel = EdgePanel(x[:, burn_in:], np.arange(t_first, t_first + n), phase_offset=phase_offset,
                      meta={"source": "simulate_balarm", "burn_in": burn_in})
    return panel, labels


# --------------------------------------------------------------------------
# analysis
# --------------------------------------------------------------------------

def alarm1_stationary(b: float, c: float) -> StationarySummary:
    """Stationary marginal and lag-1 autocorrelation of ``X_t | X_{t-1} ~ Ber(inv_logit(b X_{t-1} + c))``.

    The process is a two-state Markov chain with ``p01 = inv_logit(c)`` and
    ``p11 = inv_logit(b + c)``; its stationary law is
    ``p01 / (1 + p01 - p11)`` and its lag-1 autocorrelation ``p11 - p01``.
    """
    p01 = inv_logit(float(c))
    p11 = inv_logit(float(b) + float(c))
    return StationarySummary(p01 / (1.0 + p01 - p11), p11 - p01)


def cyclo_curves(params: ClusterParams, spec: ModelSpec, start: float = 0.5,
                 tol: float = CURVE_TOL, max_sweeps: int = MAX_SWEEPS) -> CycloCurves:
    """Periodic marginal probability and lag-1 autocorrelation over one period.

    Iterates ``p_l = p_{l-1} pi1(l) + (1 - p_{l-1}) pi0(l)`` around the period
    from ``start`` until the curve moves by less than ``tol`` in sup norm,
    where ``pi0``/``pi1`` are the success probabilities after a 0/1.  The
    lag-1 correlation follows from
    ``Cov(X_{l-1}, X_l) = p_{l-1} (1 - p_{l-1}) (pi1(l) - pi0(l))``.
    Only defined for ``K <= 1``.
    """
    if spec.ar_order > 1:
        raise ValidationError("cyclo_curves needs ar_order <= 1")
    P = spec.period
    times = np.arange(P, dtype=float)
    base = np.full(P, params.c)
    if spec.harmonic_order:
        base += harmonic_basis(times, spec.harmonic_order, P) @ params.a
    pi0 = inv_logit(base)
    pi1 = inv_logit(base + params.b[0]) if spec.ar_order else pi0
    pi0l, pi1l = pi0.tolist(), pi1.tolist()
    p = [float(start)] * P
    last = float(start)
    for _ in range(max_sweeps):
        delta = 0.0
        for l in range(P):
            new = last * pi1l[l] + (1.0 - last) * pi0l[l]
            delta = max(delta, abs(new - p[l]))
            p[l] = last = new
        if delta < tol:
            break
    else:
        raise ConvergenceError(f"cyclostationary curve did not converge in {max_sweeps} sweeps")
    p = np.array(p)
    prev = np.roll(p, 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.sqrt(prev * (1.0 - prev) / (p * (1.0 - p))) * (pi1 - pi0)
    rho = np.where(np.isfinite(rho), rho, 0.0)
    return CycloCurves(p, rho)


def alarm1_grid(b_values, c_values) -> np.ndarray:
    """Rows ``(b, c, p, rho)`` of :func:`alarm1_stationary` over a grid."""
    rows = []
    for b in b_values:
        for c in c_values:
            s = alarm1_stationary(b, c)
            rows.append((b, c, s.marginal_p, s.lag1_rho))
    return np.array(rows)
