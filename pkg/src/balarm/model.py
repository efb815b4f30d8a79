"""Domain types and logistic kernels of the BALARM model.

A BALARM model is a finite mixture of logistic autoregressive binary time
series.  Edge ``i`` belongs to cluster ``g`` with probability ``pi[g]`` and,
given its cluster, ``X[i, l]`` is Bernoulli with log-odds

    eta = sum_d a[d] f_d(t_l) + sum_k b[k] X[i, l-k] + c

where ``f`` is the interleaved cosine/sine basis of :func:`harmonic_basis`.

Indices are 0-based throughout the Python API (clusters, edges, nodes);
the text formats written by :mod:`balarm.io` use 1-based indices.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .exceptions import ValidationError

PI_SUM_TOL = 1e-12


def _frozen(arr, dtype=float) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


# --------------------------------------------------------------------------
# types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    """Structural hyperparameters of a BALARM model.

    Parameters
    ----------
    n_clusters : int
        Number of link communities ``G``.
    ar_order : int
        Autoregressive order ``K``.
    harmonic_order : int
        Number of harmonic pairs ``H``; the covariate dimension is ``2H``.
    period : int
        Time steps per cycle ``P`` (288 for 5-minute steps over a day).
    """

    n_clusters: int = 1
    ar_order: int = 1
    harmonic_order: int = 0
    period: int = 288

    def __post_init__(self):
        for name in ("n_clusters", "ar_order", "harmonic_order", "period"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise ValidationError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.n_clusters < 1:
            raise ValidationError("n_clusters must be >= 1")
        if self.ar_order < 0 or self.harmonic_order < 0:
            raise ValidationError("ar_order and harmonic_order must be >= 0")
        if self.period < 1:
            raise ValidationError("period must be >= 1")
        if self.harmonic_order > 0 and self.period < 2:
            raise ValidationError("harmonic terms need period >= 2")

    @property
    def n_harmonics(self) -> int:
        """Covariate dimension ``D = 2H``."""
        return 2 * self.harmonic_order

    @property
    def n_coefficients(self) -> int:
        """Coefficients per cluster: harmonics, lags and intercept."""
        return 2 * self.harmonic_order + self.ar_order + 1

    @property
    def n_phases(self) -> int:
        """Distinct time-of-day phases that affect the predictor."""
        return self.period if self.harmonic_order > 0 else 1

    def replace(self, **changes) -> "ModelSpec":
        fields = dict(n_clusters=self.n_clusters, ar_order=self.ar_order,
                      harmonic_order=self.harmonic_order, period=self.period)
        fields.update(changes)
        return ModelSpec(**fields)


@dataclass(frozen=True)
class ClusterParams:
    """Coefficients of one link community.

    ``a`` holds the harmonic coefficients (cos 1, sin 1, cos 2, ...), ``b``
    the lag coefficients (lag 1 first) and ``c`` the intercept.
    """

    a: np.ndarray
    b: np.ndarray
    c: float

    def __post_init__(self):
        object.__setattr__(self, "a", _frozen(np.reshape(self.a, -1)))
        object.__setattr__(self, "b", _frozen(np.reshape(self.b, -1)))
        object.__setattr__(self, "c", float(self.c))
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b)) and np.isfinite(self.c)):
            raise ValidationError("cluster parameters must be finite")

    @classmethod
    def zeros(cls, spec: ModelSpec) -> "ClusterParams":
        return cls(np.zeros(spec.n_harmonics), np.zeros(spec.ar_order), 0.0)

    @classmethod
    def from_vector(cls, vec, spec: ModelSpec) -> "ClusterParams":
        """Inverse of :meth:`vector` (layout: harmonics, lags, intercept)."""
        vec = np.asarray(vec, dtype=float).reshape(-1)
        if vec.size != spec.n_coefficients:
            raise ValidationError(f"expected {spec.n_coefficients} coefficients, got {vec.size}")
        d = spec.n_harmonics
        return cls(vec[:d], vec[d:d + spec.ar_order], vec[-1])

    def vector(self) -> np.ndarray:
        return np.concatenate([self.a, self.b, [self.c]])

    def check(self, spec: ModelSpec) -> None:
        if self.a.size != spec.n_harmonics or self.b.size != spec.ar_order:
            raise ValidationError(
                f"cluster has |a|={self.a.size}, |b|={self.b.size}; spec needs "
                f"|a|={spec.n_harmonics}, |b|={spec.ar_order}")


@dataclass(frozen=True)
class BalarmModel:
    """Mixing weights plus one :class:`ClusterParams` per cluster."""

    spec: ModelSpec
    pi: np.ndarray
    clusters: tuple

    def __post_init__(self):
        pi = _frozen(self.pi).reshape(-1)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "clusters", tuple(self.clusters))
        if pi.size != self.spec.n_clusters or len(self.clusters) != self.spec.n_clusters:
            raise ValidationError("pi and clusters must have n_clusters entries")
        if np.any(~np.isfinite(pi)) or np.any(pi < 0) or abs(pi.sum() - 1.0) > PI_SUM_TOL:
            raise ValidationError(f"mixing weights must be a probability vector, got {pi}")
        for cl in self.clusters:
            cl.check(self.spec)

    @classmethod
    def from_matrix(cls, spec: ModelSpec, pi, coefs) -> "BalarmModel":
        coefs = np.asarray(coefs, dtype=float).reshape(spec.n_clusters, spec.n_coefficients)
        return cls(spec, pi, tuple(ClusterParams.from_vector(row, spec) for row in coefs))

    def coef_matrix(self) -> np.ndarray:
        """``G x (2H+K+1)`` matrix of stacked cluster vectors."""
        return np.vstack([cl.vector() for cl in self.clusters])

    def reorder(self, perm) -> "BalarmModel":
        """Model whose cluster ``g`` is this model's cluster ``perm[g]``."""
        perm = [int(p) for p in perm]
        if sorted(perm) != list(range(self.spec.n_clusters)):
            raise ValidationError(f"not a permutation: {perm}")
        return BalarmModel(self.spec, self.pi[perm], tuple(self.clusters[p] for p in perm))


@dataclass(frozen=True)
class EdgePanel:
    """``J x n`` binary edge series on a regular grid of time steps.

    Parameters
    ----------
    values : array_like
        Binary matrix, one row per edge.
    timestamps : array_like, optional
        Integer time-step indices, strictly increasing with unit spacing.
        Defaults to ``1..n``.
    edge_map : array_like, optional
        ``J x 2`` array of node pairs ``(k, j)`` with ``k < j``; row ``i`` is the
        pair of edge ``i``.  ``None`` for panels not derived from a node set.
    node_labels : sequence of str, optional
        Category of every node (e.g. ADM/MED/NUR/PAT).
    phase_offset : float
        Added to the timestamps before evaluating harmonics, so that
        ``timestamp + phase_offset`` is the time of day in steps.
    meta : mapping
        Free-form provenance (window length, start time, phase origin, ...).
    """

    values: np.ndarray
    timestamps: Optional[np.ndarray] = None
    edge_map: Optional[np.ndarray] = None
    node_labels: Optional[tuple] = None
    phase_offset: float = 0.0
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValidationError("values must be a non-empty 2-D array")
        if not np.all((values == 0) | (values == 1)):
            raise ValidationError("values must be binary (0/1)")
        object.__setattr__(self, "values", _frozen(values, np.int8))
        n = values.shape[1]
        if self.timestamps is None:
            ts = np.arange(1, n + 1)
        else:
            ts = np.asarray(self.timestamps)
            if ts.shape != (n,) or not np.all(ts == np.round(ts)):
                raise ValidationError("timestamps must be n integers")
            ts = ts.astype(np.int64)
            if n > 1 and not np.all(np.diff(ts) == 1):
                raise ValidationError("timestamps must be consecutive time steps (no gaps)")
        object.__setattr__(self, "timestamps", _frozen(ts, np.int64))
        if self.edge_map is not None:
            em = np.asarray(self.edge_map, dtype=np.int64)
            if em.shape != (values.shape[0], 2):
                raise ValidationError("edge_map must have shape (J, 2)")
            if np.any(em[:, 0] >= em[:, 1]) or np.any(em < 0):
                raise ValidationError("edge_map pairs must satisfy 0 <= k < j")
            if len({(int(k), int(j)) for k, j in em}) != em.shape[0]:
                raise ValidationError("edge_map must be injective")
            object.__setattr__(self, "edge_map", _frozen(em, np.int64))
        if self.node_labels is not None:
            object.__setattr__(self, "node_labels", tuple(str(s) for s in self.node_labels))
        object.__setattr__(self, "phase_offset", float(self.phase_offset))
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def n_edges(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]

    @property
    def n_nodes(self) -> Optional[int]:
        if self.edge_map is None:
            return None
        return int(self.edge_map.max()) + 1

    def harmonic_times(self) -> np.ndarray:
        return self.timestamps + self.phase_offset

    def subset(self, rows) -> "EdgePanel":
        """Panel restricted to (or reordered by) the given edge rows."""
        rows = np.asarray(rows)
        em = None if self.edge_map is None else self.edge_map[rows]
        return EdgePanel(self.values[rows], self.timestamps, em, self.node_labels,
                         self.phase_offset, self.meta)


@dataclass(frozen=True)
class FitResult:
    """Outcome of :func:`balarm.em.fit_em`.

    ``tau`` holds the responsibilities at the returned model and
    ``hard_labels`` its row-wise argmax (ties go to the lowest cluster).
    ``meta`` records settings, per-cluster ridge, empty-cluster flags and
    restart log-likelihoods.
    """

    model: BalarmModel
    tau: np.ndarray
    hard_labels: np.ndarray
    loglik_trace: np.ndarray
    converged: bool
    n_iters: int
    meta: Mapping = field(default_factory=dict)

    @property
    def loglik(self) -> float:
        return float(self.loglik_trace[-1])


# --------------------------------------------------------------------------
# node pairs
# --------------------------------------------------------------------------

def pair_index(k: int, j: int, n_nodes: int) -> int:
    """Lexicographic index of the pair ``(k, j)``, ``k < j``, among all pairs."""
    if not 0 <= k < j < n_nodes:
        raise ValidationError(f"invalid pair ({k}, {j}) for {n_nodes} nodes")
    return k * n_nodes - k * (k + 1) // 2 + (j - k - 1)


def all_pairs(n_nodes: int) -> np.ndarray:
    """All ``N(N-1)/2`` pairs in lexicographic order."""
    k, j = np.triu_indices(n_nodes, 1)
    return np.column_stack([k, j]).astype(np.int64)


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------

def harmonic_basis(t, H: int, P: int) -> np.ndarray:
    """Interleaved harmonic covariates at time ``t``.

    Entry ``2m-2`` is ``cos(2 pi m t / P)`` and entry ``2m-1`` is
    ``sin(2 pi m t / P)`` for ``m = 1..H``.  ``t`` is reduced modulo ``P``
    first, so the basis is exactly periodic for integer times.  An array of
    times gives one row per time.
    """
    t = np.asarray(t, dtype=float)
    out = np.empty(t.shape + (2 * H,))
    if H == 0:
        return out
    phase = 2.0 * np.pi * np.mod(t, P) / P
    for m in range(1, H + 1):
        out[..., 2 * m - 2] = np.cos(m * phase)
        out[..., 2 * m - 1] = np.sin(m * phase)
    return out


def linear_predictor(history: Sequence[int], t, params: ClusterParams, spec: ModelSpec) -> float:
    """Log-odds of ``X_l = 1`` given lags ``history = (x_{l-1}, ..., x_{l-K})``."""
    history = np.asarray(history, dtype=float).reshape(-1)
    if history.size != spec.ar_order:
        raise ValidationError(f"history must have {spec.ar_order} values, got {history.size}")
    params.check(spec)
    eta = params.c + float(params.b @ history) if spec.ar_order else params.c
    if spec.harmonic_order:
        eta += float(params.a @ harmonic_basis(t, spec.harmonic_order, spec.period))
    return float(eta)


def inv_logit(x):
    """Numerically stable ``exp(x) / (1 + exp(x))``."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def softplus(eta):
    """``log(1 + exp(eta))`` without overflow."""
    eta = np.asarray(eta, dtype=float)
    out = np.maximum(eta, 0.0) + np.log1p(np.exp(-np.abs(eta)))
    return out if out.ndim else float(out)


def bernoulli_loglik_term(x, eta):
    """``x * eta - log(1 + exp(eta))``."""
    out = np.asarray(x, dtype=float) * np.asarray(eta, dtype=float) - softplus(eta)
    return out if np.ndim(out) else float(out)
