"""EM fitting of BALARM mixtures.

The E-step computes responsibilities ``tau[i, g]`` in the log domain; the
M-step sets ``pi`` to the column means of ``tau`` and refits every cluster by
weighted IRLS over the pooled rows of all edges, with edge ``i`` weighted by
``tau[i, g]``.  Both steps run on :class:`~balarm.glm.PanelStats`, the
cell-count compression of the panel.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.optimize import linear_sum_assignment
from scipy.special import comb, logsumexp

from . import rng as _rng
from .exceptions import FitError, NumericalError, SeparationError, ValidationError
from .glm import PanelStats, build_design, summarize_panel, weighted_logistic_fit
from .model import (BalarmModel, ClusterParams, EdgePanel, FitResult, ModelSpec,
                    bernoulli_loglik_term, softplus)

logger = logging.getLogger(__name__)

INIT_STRATEGIES = ("random", "kmeans", "model")
DEFAULT_RESTARTS = {"random": 10, "kmeans": 1, "model": 1}
EMPTY_CLUSTER_FRACTION = 1e-8
MONOTONE_SLACK = 1e-8
PROFILE_BINS = 8


@dataclass(frozen=True)
class EMSettings:
    """Settings shared by :func:`fit_em`, the BIC sweep and the bootstrap.

    ``n_restarts=None`` means 10 restarts for random initialisation and one
    otherwise.  ``ridge`` is escalated tenfold on separation, up to
    ``ridge_max``.
    """

    init: str = "kmeans"
    n_restarts: Optional[int] = None
    tol: float = 1e-6
    max_iter: int = 500
    ridge: float = 1e-6
    ridge_max: float = 1e-2
    glm_tol: float = 1e-8
    glm_max_iter: int = 100

    def __post_init__(self):
        if self.init not in INIT_STRATEGIES:
            raise ValidationError(f"unknown init strategy {self.init!r}; use one of {INIT_STRATEGIES}")
        if self.n_restarts is not None and self.n_restarts < 1:
            raise ValidationError("n_restarts must be >= 1")
        if self.ridge < 0 or self.ridge_max < self.ridge:
            raise ValidationError("need 0 <= ridge <= ridge_max")

    @property
    def restarts(self) -> int:
        return self.n_restarts if self.n_restarts is not None else DEFAULT_RESTARTS[self.init]

    def as_dict(self) -> dict:
        return asdict(self)


def _stats(data, spec: ModelSpec) -> PanelStats:
    if isinstance(data, PanelStats):
        if data.spec.ar_order != spec.ar_order or data.spec.harmonic_order != spec.harmonic_order \
                or data.spec.period != spec.period:
            raise ValidationError("panel statistics were built for a different model shape")
        return data
    return summarize_panel(data, spec)


# --------------------------------------------------------------------------
# likelihoods
# --------------------------------------------------------------------------

def cluster_loglik(panel: EdgePanel, i: int, params: ClusterParams, spec: ModelSpec) -> float:
    """Conditional log-likelihood of edge ``i`` under one cluster (rows ``l > K``)."""
    params.check(spec)
    rows = build_design(panel.subset([i]), spec)[0]
    eta = rows.covariates @ params.vector()
    return float(np.sum(bernoulli_loglik_term(rows.response, eta)))


def cluster_loglik_matrix(data, model: BalarmModel) -> np.ndarray:
    """``J x G`` matrix of :func:`cluster_loglik` for every edge and cluster."""
    stats = _stats(data, model.spec)
    eta = stats.covariates @ model.coef_matrix().T
    return stats.ones @ eta - stats.totals @ softplus(eta)


def _log_joint(stats: PanelStats, model: BalarmModel) -> np.ndarray:
    with np.errstate(divide="ignore"):
        log_pi = np.log(model.pi)
    return cluster_loglik_matrix(stats, model) + log_pi[None, :]


def _responsibilities(log_joint: np.ndarray) -> np.ndarray:
    norm = logsumexp(log_joint, axis=1, keepdims=True)
    return np.exp(log_joint - norm)


def e_step(data, model: BalarmModel) -> np.ndarray:
    """Posterior cluster probabilities ``tau`` (``J x G``, rows sum to 1)."""
    return _responsibilities(_log_joint(_stats(data, model.spec), model))


def observed_loglik(data, model: BalarmModel) -> float:
    """``sum_i log sum_g pi_g exp(cluster_loglik(i, g))``."""
    return float(np.sum(logsumexp(_log_joint(_stats(data, model.spec), model), axis=1)))


def complete_loglik(data, model: BalarmModel, labels) -> float:
    """Complete-data log-likelihood at hard cluster labels."""
    labels = np.asarray(labels, dtype=int)
    lj = _log_joint(_stats(data, model.spec), model)
    return float(np.sum(lj[np.arange(lj.shape[0]), labels]))


def hard_labels(tau: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ties resolve to the lowest cluster index."""
    return np.argmax(tau, axis=1)


# --------------------------------------------------------------------------
# M-step
# --------------------------------------------------------------------------

@dataclass
class _MStepInfo:
    ridge: list
    empty: list
    glm_converged: list


def _fit_cluster(stats: PanelStats, weights: np.ndarray, init: np.ndarray,
                 settings: EMSettings):
    succ = weights @ stats.ones
    tot = weights @ stats.totals
    y = np.divide(succ, tot, out=np.zeros_like(succ), where=tot > 0)
    ridge = settings.ridge
    while True:
        try:
            return weighted_logistic_fit(stats.covariates, y, tot, init=init, ridge=ridge,
                                         tol=settings.glm_tol, max_iter=settings.glm_max_iter)
        except SeparationError:
            nxt = max(ridge * 10.0, 1e-8)
            if nxt > settings.ridge_max * (1 + 1e-12):
                raise
            logger.debug("separation detected; ridge %.1e -> %.1e", ridge, nxt)
            ridge = nxt


def _m_step(stats: PanelStats, tau: np.ndarray, previous: BalarmModel, settings: EMSettings):
    spec = previous.spec
    J = tau.shape[0]
    pi = tau.mean(axis=0)
    pi = pi / pi.sum()
    clusters, info = [], _MStepInfo([], [], [])
    for g in range(spec.n_clusters):
        prev = previous.clusters[g]
        if tau[:, g].sum() < EMPTY_CLUSTER_FRACTION * J:
            clusters.append(prev)
            info.ridge.append(float("nan"))
            info.empty.append(True)
            info.glm_converged.append(True)
            continue
        fit = _fit_cluster(stats, tau[:, g], prev.vector(), settings)
        clusters.append(ClusterParams.from_vector(fit.coef, spec))
        info.ridge.append(fit.ridge)
        info.empty.append(False)
        info.glm_converged.append(fit.converged)
    return BalarmModel(spec, pi, tuple(clusters)), info


def m_step(data, tau, spec: ModelSpec, previous: Optional[BalarmModel] = None,
           settings: Optional[EMSettings] = None) -> BalarmModel:
    """Maximisation step.

    ``pi_g`` is the mean responsibility of cluster ``g``; each cluster is a
    weighted logistic fit warm-started at ``previous``.  A cluster whose total
    responsibility is below ``1e-8 * J`` keeps its previous parameters and
    triggers a :class:`RuntimeWarning`.
    """
    settings = settings or EMSettings()
    stats = _stats(data, spec)
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (stats.n_edges, spec.n_clusters):
        raise ValidationError(f"responsibilities must have shape {(stats.n_edges, spec.n_clusters)}")
    if np.any(tau < 0) or np.max(np.abs(tau.sum(axis=1) - 1.0)) > 1e-8:
        raise ValidationError("responsibility rows must be probability vectors")
    if previous is None:
        previous = _zero_model(spec)
    model, info = _m_step(stats, tau, previous, settings)
    for g, empty in enumerate(info.empty):
        if empty:
            warnings.warn(f"cluster {g} is empty; keeping its previous parameters", RuntimeWarning)
    return model


def _zero_model(spec: ModelSpec) -> BalarmModel:
    G = spec.n_clusters
    return BalarmModel(spec, np.full(G, 1.0 / G), tuple(ClusterParams.zeros(spec) for _ in range(G)))


# --------------------------------------------------------------------------
# initialisation
# --------------------------------------------------------------------------

def summary_features(panel: EdgePanel, spec: ModelSpec) -> np.ndarray:
    """Per-edge features for k-means initialisation.

    Columns: logit of the clipped edge mean, lag-1 sample autocorrelation
    (0 for constant series) and the mean activity in 8 time-of-day bins.
    """
    x = panel.values.astype(float)
    J, n = x.shape
    eps = 0.5 / n
    mean = np.clip(x.mean(axis=1), eps, 1 - eps)
    logit_mean = np.log(mean / (1 - mean))
    a, b = x[:, :-1], x[:, 1:]
    a = a - a.mean(axis=1, keepdims=True)
    b = b - b.mean(axis=1, keepdims=True)
    denom = np.sqrt((a ** 2).sum(axis=1) * (b ** 2).sum(axis=1))
    acf = np.divide((a * b).sum(axis=1), denom, out=np.zeros(J), where=denom > 0)
    tod = np.mod(panel.harmonic_times(), spec.period)
    bins = np.minimum((tod * PROFILE_BINS / spec.period).astype(int), PROFILE_BINS - 1)
    profile = np.zeros((J, PROFILE_BINS))
    for k in range(PROFILE_BINS):
        sel = bins == k
        if sel.any():
            profile[:, k] = x[:, sel].mean(axis=1)
    return np.column_stack([logit_mean, acf, profile])


def _kmeans_labels(panel: EdgePanel, spec: ModelSpec, seed) -> np.ndarray:
    feats = summary_features(panel, spec)
    sd = feats.std(axis=0)
    feats = (feats[:, sd > 0] - feats[:, sd > 0].mean(axis=0)) / sd[sd > 0]
    G = spec.n_clusters
    if feats.shape[1] == 0 or G == 1:
        return np.zeros(panel.n_edges, dtype=int)
    gen = _rng.stream(seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, labels = kmeans2(feats, G, minit="++", seed=gen)
    # order clusters by mean feature value for reproducible numbering
    order = np.argsort([feats[labels == g, 0].mean() if np.any(labels == g) else np.inf
                        for g in range(G)], kind="stable")
    rank = np.empty(G, dtype=int)
    rank[order] = np.arange(G)
    return rank[labels]


def initialize(panel, spec: ModelSpec, strategy: str = "kmeans", seed=0,
               model: Optional[BalarmModel] = None,
               settings: Optional[EMSettings] = None) -> BalarmModel:
    """Starting model for EM.

    ``"kmeans"`` clusters edge summary features and runs one M-step from the
    hard assignment; ``"random"`` draws responsibility rows from a flat
    Dirichlet and runs one M-step; ``"model"`` returns ``model`` unchanged.
    """
    settings = settings or EMSettings(init=strategy)
    if strategy not in INIT_STRATEGIES:
        raise ValidationError(f"unknown init strategy {strategy!r}; use one of {INIT_STRATEGIES}")
    if strategy == "model":
        if model is None:
            raise ValidationError("init strategy 'model' needs a model")
        if model.spec != spec:
            raise ValidationError(f"provided model has shape {model.spec}, expected {spec}")
        return model
    stats = summarize_panel(panel, spec)
    G = spec.n_clusters
    if strategy == "random":
        tau = _rng.stream(seed).dirichlet(np.ones(G), size=panel.n_edges)
    else:
        labels = _kmeans_labels(panel, spec, seed)
        tau = np.eye(G)[labels]
    start, _ = _m_step(stats, tau, _zero_model(spec), settings)
    return start


# --------------------------------------------------------------------------
# EM driver
# --------------------------------------------------------------------------

def _run_em(stats: PanelStats, model: BalarmModel, settings: EMSettings):
    trace = []
    converged = False
    empty = np.zeros(model.spec.n_clusters, dtype=bool)
    glm_failures = 0
    ridge = [settings.ridge] * model.spec.n_clusters
    log_joint = _log_joint(stats, model)
    ll = float(np.sum(logsumexp(log_joint, axis=1)))
    if not np.isfinite(ll):
        raise NumericalError("initial log-likelihood is not finite")
    trace.append(ll)
    for _ in range(settings.max_iter):
        tau = _responsibilities(log_joint)
        new_model, info = _m_step(stats, tau, model, settings)
        empty |= np.array(info.empty)
        glm_failures += sum(not c for c in info.glm_converged)
        ridge = [r if np.isfinite(r) else old for r, old in zip(info.ridge, ridge)]
        new_joint = _log_joint(stats, new_model)
        new_ll = float(np.sum(logsumexp(new_joint, axis=1)))
        if not np.isfinite(new_ll):
            raise NumericalError("log-likelihood became non-finite")
        if new_ll < ll - MONOTONE_SLACK:
            logger.warning("EM log-likelihood decreased by %.3g", ll - new_ll)
        model, log_joint = new_model, new_joint
        trace.append(new_ll)
        improvement = new_ll - ll
        ll = new_ll
        if improvement < settings.tol:
            converged = True
            break
    tau = _responsibilities(log_joint)
    info = {"empty_clusters": [int(g) for g in np.flatnonzero(empty)],
            "ridge": ridge, "glm_nonconverged": int(glm_failures)}
    return model, tau, np.array(trace), converged, info


def fit_em(panel, spec: ModelSpec, settings: Optional[EMSettings] = None, seed=0,
           init_model: Optional[BalarmModel] = None) -> FitResult:
    """Fit a BALARM mixture by EM.

    Runs ``settings.restarts`` independent EM runs (restart ``r`` seeded with
    ``(seed, r)``) and keeps the one with the highest observed log-likelihood.
    Each run alternates E- and M-steps until the log-likelihood improves by
    less than ``settings.tol`` or ``settings.max_iter`` iterations pass.

    Raises
    ------
    FitError
        If every restart fails numerically.
    """
    settings = settings or EMSettings()
    if settings.init == "model" and init_model is None:
        raise ValidationError("init 'model' requires init_model")
    if panel.n_edges < spec.n_clusters:
        raise ValidationError(f"need at least G={spec.n_clusters} edges, got {panel.n_edges}")
    stats = summarize_panel(panel, spec)
    best, failures, restart_ll = None, [], []
    for r in range(settings.restarts):
        try:
            start = initialize(panel, spec, settings.init, seed=_rng.seed_sequence(seed, _rng.RESTARTS, r),
                               model=init_model, settings=settings)
            result = _run_em(stats, start, settings)
        except NumericalError as exc:
            failures.append(f"restart {r}: {exc}")
            restart_ll.append(float("nan"))
            continue
        restart_ll.append(float(result[2][-1]))
        if best is None or result[2][-1] > best[2][-1]:
            best = result
    if best is None:
        raise FitError(f"all {settings.restarts} EM restarts failed", failures)
    model, tau, trace, converged, info = best
    meta = {"settings": settings.as_dict(), "seed": str(seed) if not isinstance(seed, int) else seed,
            "restart_logliks": restart_ll, "failed_restarts": failures, **info}
    return FitResult(model, tau, hard_labels(tau), trace, converged, len(trace) - 1, meta)


# --------------------------------------------------------------------------
# label handling
# --------------------------------------------------------------------------

def align_labels(reference: BalarmModel, fitted: BalarmModel) -> np.ndarray:
    """Permutation matching fitted clusters to reference clusters.

    Returns ``perm`` with ``fitted.reorder(perm)`` aligned to ``reference``:
    ``perm[g]`` is the fitted cluster assigned to reference cluster ``g``,
    chosen to minimise the summed Euclidean distance between parameter
    vectors.
    """
    if reference.spec.n_clusters != fitted.spec.n_clusters:
        raise ValidationError("models must have the same number of clusters")
    ref, fit = reference.coef_matrix(), fitted.coef_matrix()
    cost = np.linalg.norm(ref[:, None, :] - fit[None, :, :], axis=2)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(len(rows), dtype=int)
    perm[rows] = cols
    return perm


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Adjusted Rand index between two hard clusterings."""
    a = np.unique(np.asarray(labels_a), return_inverse=True)[1]
    b = np.unique(np.asarray(labels_b), return_inverse=True)[1]
    n = a.size
    table = np.zeros((a.max() + 1, b.max() + 1))
    np.add.at(table, (a, b), 1)
    sum_ij = comb(table, 2).sum()
    sum_a = comb(table.sum(axis=1), 2).sum()
    sum_b = comb(table.sum(axis=0), 2).sum()
    expected = sum_a * sum_b / comb(n, 2)
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))
