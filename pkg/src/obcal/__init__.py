"""Calibrated Oaxaca-Blinder estimators for completely randomized experiments."""

__version__ = "0.1.0"

from .estimators import (
    CalibratedPair,
    PredictionPair,
    calibrate,
    compute_estimators,
    fit_base_learners,
    recalibrate_check,
    tau_cal,
    tau_gbcal,
    tau_gob,
    tau_lin,
    tau_unadj,
)
from .experiment import (
    FinitePopulation,
    ObservedExperiment,
    TreatmentAllocation,
    enumerate_allocations,
    load_csv,
    load_population_csv,
    observe,
    sample_allocation,
)
from .inference import EstimateReport, make_report, variance_estimate
from .model import CalibratedOaxacaBlinder
from .regression import GLMRegressor, OLSRegressor, fit_glm, fit_ols

__all__ = [
    "CalibratedOaxacaBlinder",
    "CalibratedPair",
    "EstimateReport",
    "FinitePopulation",
    "GLMRegressor",
    "OLSRegressor",
    "ObservedExperiment",
    "PredictionPair",
    "TreatmentAllocation",
    "calibrate",
    "compute_estimators",
    "enumerate_allocations",
    "fit_base_learners",
    "fit_glm",
    "fit_ols",
    "load_csv",
    "load_population_csv",
    "make_report",
    "observe",
    "recalibrate_check",
    "sample_allocation",
    "tau_cal",
    "tau_gbcal",
    "tau_gob",
    "tau_lin",
    "tau_unadj",
    "variance_estimate",
]
