"""Imputation estimators of the sample average treatment effect.

Every estimator here has the same shape: predict both potential outcomes
for every unit, then average the treated-minus-control difference.
They differ only in where the predictions come from.

* ``unadj``  arm means (no covariates).
* ``lin``    arm-wise OLS of the outcome on the raw covariates.
* ``gob``    arm-wise base learner (OLS, logistic or Poisson), observed
             outcomes kept where available.
* ``gbcal``  base predictions recalibrated per arm on the own-arm
             prediction only.
* ``cal``    base predictions recalibrated per arm on both predictions.
* ``cal2``   as ``cal`` with the raw covariates appended to the
             calibration features.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from ._validation import DimensionError, as_design
from .experiment import ObservedExperiment
from .regression import (
    GlmFit,
    LinearFit,
    fit_glm,
    fit_ols,
    predict_glm,
    predict_linear,
)

BASE_LEARNERS = ("ols", "logistic", "poisson")
ESTIMATORS = ("unadj", "gob", "gbcal", "cal", "cal2", "lin")

Fit = Union[LinearFit, GlmFit]


@dataclass(frozen=True)
class PredictionPair:
    """Base-learner predictions of both potential outcomes for all units."""

    mu0: np.ndarray
    mu1: np.ndarray
    base_learner: str = "ols"
    fits: tuple = field(default=(None, None), repr=False)

    def __post_init__(self):
        mu0 = np.asarray(self.mu0, dtype=float)
        mu1 = np.asarray(self.mu1, dtype=float)
        if mu0.shape != mu1.shape or mu0.ndim != 1:
            raise DimensionError(f"mu0 {mu0.shape} and mu1 {mu1.shape} must be equal-length vectors")
        if not (np.all(np.isfinite(mu0)) and np.all(np.isfinite(mu1))):
            raise ValueError("predictions must be finite")
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "mu1", mu1)

    @property
    def converged(self) -> tuple[bool, bool]:
        return tuple(getattr(f, "converged", True) for f in self.fits)

    @property
    def rank_deficient(self) -> tuple[bool, bool]:
        return tuple(getattr(f, "rank_deficient", False) for f in self.fits)


@dataclass(frozen=True)
class CalibratedPair:
    """Per-arm calibrated predictions evaluated at every unit.

    ``coefficients[z]`` is the arm-``z`` calibration fit; its slopes are
    ordered as the columns of ``features[z]``.
    """

    mu0_cal: np.ndarray
    mu1_cal: np.ndarray
    coefficients: tuple[LinearFit, LinearFit]
    features: tuple[np.ndarray, np.ndarray] = field(repr=False, default=None)
    extra_features: Optional[np.ndarray] = field(repr=False, default=None)
    own_arm_only: bool = False

    @property
    def rank_deficient(self) -> bool:
        return any(f.rank_deficient for f in self.coefficients)


def _predict(fit: Fit, X: np.ndarray) -> np.ndarray:
    if isinstance(fit, GlmFit):
        return predict_glm(fit, X)
    return predict_linear(fit, X)


def _fit_arm(X: np.ndarray, y: np.ndarray, family: str) -> Fit:
    if family == "ols":
        return fit_ols(X, y)
    if family in ("logistic", "poisson"):
        return fit_glm(X, y, family=family)
    raise ValueError(f"unknown base learner {family!r}; expected one of {BASE_LEARNERS}")


def fit_base_learners(obs: ObservedExperiment, family: str = "ols") -> PredictionPair:
    """Fit ``y ~ 1 + X`` separately in each arm; predict at all ``N`` rows."""
    z = obs.z
    fit0 = _fit_arm(obs.X[~z], obs.y[~z], family)
    fit1 = _fit_arm(obs.X[z], obs.y[z], family)
    return PredictionPair(
        mu0=_predict(fit0, obs.X),
        mu1=_predict(fit1, obs.X),
        base_learner=family,
        fits=(fit0, fit1),
    )


def _check_preds(obs: ObservedExperiment, mu0: np.ndarray, mu1: np.ndarray) -> None:
    if mu0.size != obs.N or mu1.size != obs.N:
        raise DimensionError(
            f"predictions have length {mu0.size}/{mu1.size}, experiment has N={obs.N}"
        )


def tau_unadj(obs: ObservedExperiment) -> float:
    return float(obs.y[obs.z].mean() - obs.y[~obs.z].mean())


def hybrid_estimate(obs: ObservedExperiment, mu0, mu1) -> float:
    """Average of imputed differences, keeping observed outcomes as-is.

    Unit ``i`` contributes ``y_i - mu0_i`` if treated and ``mu1_i - y_i``
    otherwise.
    """
    mu0 = np.asarray(mu0, dtype=float)
    mu1 = np.asarray(mu1, dtype=float)
    _check_preds(obs, mu0, mu1)
    y_hat1 = np.where(obs.z, obs.y, mu1)
    y_hat0 = np.where(obs.z, mu0, obs.y)
    return float(np.mean(y_hat1 - y_hat0))


def tau_gob(obs: ObservedExperiment, preds: PredictionPair) -> float:
    return hybrid_estimate(obs, preds.mu0, preds.mu1)


def _extra(obs: ObservedExperiment, extra_features) -> Optional[np.ndarray]:
    if extra_features is None:
        return None
    F = np.asarray(extra_features, dtype=float)
    if F.size == 0:
        return None
    F = as_design(F, "extra_features")
    if F.shape[0] != obs.N:
        raise DimensionError(
            f"extra_features has {F.shape[0]} rows, experiment has N={obs.N}"
        )
    return F


def _calibrate_arrays(
    z: np.ndarray,
    y: np.ndarray,
    mu0: np.ndarray,
    mu1: np.ndarray,
    F: Optional[np.ndarray],
    own_arm_only: bool,
) -> CalibratedPair:
    fits, cal, feats = [], [], []
    for arm, own in ((False, mu0), (True, mu1)):
        cols = [own] if own_arm_only else [mu0, mu1]
        if F is not None:
            design = np.column_stack([F, *cols])
        else:
            design = np.column_stack(cols)
        rows = z == arm
        fit = fit_ols(design[rows], y[rows])
        fits.append(fit)
        cal.append(fit.intercept + design @ fit.slopes)
        feats.append(design)
    return CalibratedPair(
        mu0_cal=cal[0],
        mu1_cal=cal[1],
        coefficients=(fits[0], fits[1]),
        features=(feats[0], feats[1]),
        extra_features=F,
        own_arm_only=own_arm_only,
    )


def calibrate(
    obs: ObservedExperiment,
    preds: PredictionPair,
    extra_features=None,
    own_arm_only: bool = False,
) -> CalibratedPair:
    """Linear calibration of a pair of prediction vectors.

    In each arm, regress the observed outcome (with intercept) on
    ``(f(x), mu0, mu1)``, or on ``(f(x), mu_z)`` when ``own_arm_only``, and
    evaluate the fit at every unit. Collinear or constant features go
    through the pseudoinverse path and are never dropped explicitly.
    """
    _check_preds(obs, preds.mu0, preds.mu1)
    F = _extra(obs, extra_features)
    return _calibrate_arrays(obs.z, obs.y, preds.mu0, preds.mu1, F, own_arm_only)


def predicted_difference(calpair: CalibratedPair) -> float:
    return float(np.mean(calpair.mu1_cal - calpair.mu0_cal))


def tau_cal(obs: ObservedExperiment, preds: PredictionPair, extra_features=None) -> float:
    return predicted_difference(calibrate(obs, preds, extra_features))


def tau_gbcal(obs: ObservedExperiment, preds: PredictionPair) -> float:
    return predicted_difference(calibrate(obs, preds, own_arm_only=True))


def lin_pair(obs: ObservedExperiment) -> CalibratedPair:
    """Arm-wise OLS on the raw covariates, packaged as a calibrated pair."""
    fits, cal = [], []
    for arm in (False, True):
        rows = obs.z == arm
        fit = fit_ols(obs.X[rows], obs.y[rows])
        fits.append(fit)
        cal.append(predict_linear(fit, obs.X))
    return CalibratedPair(
        mu0_cal=cal[0],
        mu1_cal=cal[1],
        coefficients=(fits[0], fits[1]),
        features=(obs.X, obs.X),
    )


def tau_lin(obs: ObservedExperiment) -> float:
    return predicted_difference(lin_pair(obs))


def recalibrate_check(obs: ObservedExperiment, calpair: CalibratedPair) -> float:
    """Largest change in any prediction when calibration is applied twice."""
    again = _calibrate_arrays(
        obs.z,
        obs.y,
        calpair.mu0_cal,
        calpair.mu1_cal,
        calpair.extra_features,
        calpair.own_arm_only,
    )
    return float(
        max(
            np.max(np.abs(again.mu0_cal - calpair.mu0_cal)),
            np.max(np.abs(again.mu1_cal - calpair.mu1_cal)),
        )
    )


def prediction_unbiasedness_gap(obs: ObservedExperiment, mu0, mu1) -> float:
    """Max over arms of ``|sum fitted - sum observed| / (1 + |sum observed|)``."""
    gaps = []
    for arm, mu in ((False, mu0), (True, mu1)):
        rows = obs.z == arm
        observed = obs.y[rows].sum()
        gaps.append(abs(np.sum(np.asarray(mu)[rows]) - observed) / (1 + abs(observed)))
    return float(max(gaps))


@dataclass(frozen=True)
class EstimatorOutput:
    """An estimate together with the predictions its variance is built on."""

    name: str
    estimate: float
    mu0: np.ndarray
    mu1: np.ndarray
    base_converged: bool
    rank_deficient: bool
    calibrated: Optional[CalibratedPair] = None
    base_fits: Optional[tuple] = field(default=None, repr=False)


def compute_estimators(
    obs: ObservedExperiment,
    names=ESTIMATORS,
    family: str = "ols",
    extra_features=None,
) -> dict[str, EstimatorOutput]:
    """Evaluate several estimators on one experiment, sharing base fits.

    ``extra_features`` feeds ``cal2``; when omitted it defaults to the raw
    covariates.
    """
    unknown = set(names) - set(ESTIMATORS)
    if unknown:
        raise ValueError(f"unknown estimators {sorted(unknown)}; expected a subset of {ESTIMATORS}")
    out: dict[str, EstimatorOutput] = {}
    preds = None
    if {"gob", "gbcal", "cal", "cal2"} & set(names):
        preds = fit_base_learners(obs, family)
        base_ok = all(preds.converged)
        base_rd = any(preds.rank_deficient)

    def from_pair(name, cp, converged=True, rd=False, fits=None):
        return EstimatorOutput(
            name=name,
            estimate=predicted_difference(cp),
            mu0=cp.mu0_cal,
            mu1=cp.mu1_cal,
            base_converged=converged,
            rank_deficient=rd or cp.rank_deficient,
            calibrated=cp,
            base_fits=fits,
        )

    for name in names:
        if name == "unadj":
            m0 = np.full(obs.N, obs.y[~obs.z].mean())
            m1 = np.full(obs.N, obs.y[obs.z].mean())
            out[name] = EstimatorOutput(name, tau_unadj(obs), m0, m1, True, False)
        elif name == "lin":
            out[name] = from_pair(name, lin_pair(obs))
        elif name == "gob":
            out[name] = EstimatorOutput(
                name, tau_gob(obs, preds), preds.mu0, preds.mu1, base_ok, base_rd,
                base_fits=preds.fits,
            )
        elif name == "gbcal":
            out[name] = from_pair(name, calibrate(obs, preds, own_arm_only=True), base_ok, base_rd, preds.fits)
        elif name == "cal":
            out[name] = from_pair(name, calibrate(obs, preds), base_ok, base_rd, preds.fits)
        elif name == "cal2":
            F = obs.X if extra_features is None else extra_features
            out[name] = from_pair(name, calibrate(obs, preds, F), base_ok, base_rd, preds.fits)
    return out
