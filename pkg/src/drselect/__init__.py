"""Doubly robust estimation of average causal effects with SCAD variable selection."""

from .aipw import AipwEstimate, aipw_point, estimate, influence_values
from .core import Dataset, Standardization, split_by_arm, standardize
from .pglm import LambdaGrid, PenalizedFit, fit_penalized_linear, fit_penalized_logistic
from .pipeline import EstimateConfig, EstimateResult, run_estimate
from .refit import RefitModels, build_refit, refit_outcome, refit_ps
from .scad import ScadParams, scad_penalty, scad_rate, scad_threshold
from .selection import SelectionConfig, SelectionResult, Strategy, select_variables, strategy_set

__version__ = "0.1.0"

__all__ = [
    "AipwEstimate", "Dataset", "EstimateConfig", "EstimateResult", "LambdaGrid", "PenalizedFit", "RefitModels",
    "ScadParams", "SelectionConfig", "SelectionResult", "Standardization", "Strategy", "aipw_point", "build_refit",
    "estimate", "fit_penalized_linear", "fit_penalized_logistic", "influence_values", "refit_outcome", "refit_ps",
    "run_estimate", "scad_penalty", "scad_rate", "scad_threshold", "select_variables", "split_by_arm", "standardize",
    "strategy_set",
]
