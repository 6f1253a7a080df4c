"""Mixtures of linear experts for censored responses with scale-mixture-of-normal errors."""

__version__ = "0.1.0"

from .smn import LocationScale, SmnFamily, smn_cdf, smn_logpdf, smn_pdf, stable_normal_hazard
from .moments import MomentTriple, censored_moments
from .model import CensoredData, CensoredObservation, MixtureParams, observed_loglik, responsibilities
from .ecme import FitOptions, FitReport, fit
from .inference import information_se, score_vectors
from .metrics import aic_bic, mcr, rand_indices, regression_mean_mse

__all__ = [
    "LocationScale", "SmnFamily", "smn_cdf", "smn_logpdf", "smn_pdf", "stable_normal_hazard",
    "MomentTriple", "censored_moments",
    "CensoredData", "CensoredObservation", "MixtureParams", "observed_loglik", "responsibilities",
    "FitOptions", "FitReport", "fit",
    "information_se", "score_vectors",
    "aic_bic", "mcr", "rand_indices", "regression_mean_mse",
]
