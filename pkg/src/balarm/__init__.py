"""Mixtures of logistic autoregressive binary time series for edge panels."""
__version__ = "0.1.0"

from .alarm import (SIMULATION_CLUSTERS, CycloCurves, StationarySummary, alarm1_grid,
                    alarm1_stationary, cyclo_curves, simulate_alarm, simulate_balarm,
                    simulation_model)
from .bootstrap import BootstrapBands, parametric_bootstrap
from .diagnostics import (crosscorr_histograms, crosscorr_null, crosscorr_observed,
                          geometric_qq, geometric_run_test, independence_probe,
                          ks_geometric, run_lengths)
from .em import (EMSettings, adjusted_rand_index, align_labels, complete_loglik, e_step,
                 fit_em, initialize, m_step, observed_loglik)
from .exceptions import (BalarmError, ConvergenceError, FitError, InsufficientDataError,
                         NumericalError, SeparationError, ValidationError)
from .glm import weighted_logistic_fit
from .ingest import aggregate, parse_contacts
from .model import (BalarmModel, ClusterParams, EdgePanel, FitResult, ModelSpec,
                    harmonic_basis, inv_logit, linear_predictor)
from .selection import bic, n_parameters, sweep

__all__ = [
    "BalarmError",
    "BalarmModel",
    "BootstrapBands",
    "ClusterParams",
    "ConvergenceError",
    "CycloCurves",
    "EMSettings",
    "EdgePanel",
    "FitError",
    "FitResult",
    "InsufficientDataError",
    "ModelSpec",
    "NumericalError",
    "SIMULATION_CLUSTERS",
    "SeparationError",
    "StationarySummary",
    "ValidationError",
    "adjusted_rand_index",
    "aggregate",
    "alarm1_grid",
    "alarm1_stationary",
    "align_labels",
    "bic",
    "complete_loglik",
    "crosscorr_histograms",
    "crosscorr_null",
    "crosscorr_observed",
    "cyclo_curves",
    "e_step",
    "fit_em",
    "geometric_qq",
    "geometric_run_test",
    "harmonic_basis",
    "independence_probe",
    "initialize",
    "inv_logit",
    "ks_geometric",
    "linear_predictor",
    "m_step",
    "n_parameters",
    "observed_loglik",
    "parametric_bootstrap",
    "parse_contacts",
    "run_lengths",
    "simulate_alarm",
    "simulate_balarm",
    "simulation_model",
    "sweep",
    "weighted_logistic_fit",
]
