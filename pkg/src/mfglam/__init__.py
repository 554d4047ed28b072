"""Generalized lambda emulators for stochastic simulators.

Fits, selects, validates, and serves single-fidelity (GLaM) and
multifidelity (MF-GLaM) generalized lambda models: each output
distribution parameter is a sparse polynomial function of the inputs, so
one model emulates the full conditional response distribution from
non-replicated input/output data.
"""

from .gld import GldParams, Support, inverse_quantile, log_pdf, mean, pdf, quantile, sample, support, variance
from .inputs import InputModel, Marginal
from .pce import TruncationSet, eval_basis, generate_truncation
from .model import GlamModel, LambdaExpansion, MfGlamModel, deserialize, load_model, save_model, serialize
from .likelihood import Dataset, MultiFidelityObjective, SingleFidelityObjective, mf_loglik, mf_weights, single_loglik
from .optim import FdGradient, InfeasibleStartError, OptimConfig, OptimReport, fd_gradient, maximize
from .fit_single import CandidateGrid, FitReport, FittingError, bic, fgls_init, fit_glam, hybrid_lar
from .fit_mf import MfFitConfig, MfFitReport, fit_mfglam, input_subset_map, mf_bic
from .metrics import MetricsReport, ReferenceSet, nmse, normalized_ws_error, wasserstein2
from .simulators import (
    ExperimentPlan,
    ExperimentReport,
    borehole_det,
    borehole_det_lf,
    borehole_hf,
    borehole_lf,
    run_experiment,
    synthetic_hf,
    synthetic_lf,
    synthetic_pair,
)

__version__ = "0.1.0"
