"""Regression-plus-interpolation baseline for prediction at unseen sites."""

from .gp import GPError, GPHyper, GPModel, gp_fit, gp_mean_weights, gp_predict, refine_lengthscales
from .pipeline import (MIN_STATIONS, InsufficientStationsError, StationModel,
                       baseline_predict_unseen, closest_gridbox_predictors, fit_station_model,
                       run_baseline)
from .regression import RankDeficientError, StationRegressor, fit_gamma_glm, fit_logistic, fit_mlr
from .spline import SplineError, SplineModel, tps_eval, tps_fit

__all__ = [
    "GPError", "GPHyper", "GPModel", "gp_fit", "gp_mean_weights", "gp_predict",
    "refine_lengthscales", "MIN_STATIONS", "InsufficientStationsError", "StationModel",
    "baseline_predict_unseen", "closest_gridbox_predictors", "fit_station_model", "run_baseline",
    "RankDeficientError", "StationRegressor", "fit_gamma_glm", "fit_logistic", "fit_mlr",
    "SplineError", "SplineModel", "tps_eval", "tps_fit",
]
