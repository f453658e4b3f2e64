"""Nonparametric circular regression with mixed continuous and categorical covariates."""

from circmix.circ_core import (
    CircSummary,
    circ_mean,
    cos_loss,
    signed_diff,
    wrap_2pi,
    wrap_pi,
)
from circmix.kernels import Bandwidths, DegenerateNeighborhoodError, KernelSpec
from circmix.estimator import (
    FitResult,
    MixedSample,
    fit_point_ll,
    fit_point_nw,
    loo_predictions,
    predict_grid,
)

__version__ = "0.1.0"

__all__ = [
    "Bandwidths",
    "CircSummary",
    "DegenerateNeighborhoodError",
    "FitResult",
    "KernelSpec",
    "MixedSample",
    "circ_mean",
    "cos_loss",
    "fit_point_ll",
    "fit_point_nw",
    "loo_predictions",
    "predict_grid",
    "signed_diff",
    "wrap_2pi",
    "wrap_pi",
]
