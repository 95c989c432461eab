"""Estimator-style wrapper around the functional estimators."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_design
from .estimators import (
    BASE_LEARNERS,
    ESTIMATORS,
    _predict,
    compute_estimators,
    prediction_unbiasedness_gap,
)
from .experiment import ObservedExperiment
from .inference import report_from_output
from .regression import predict_linear


class CalibratedOaxacaBlinder(BaseEstimator):
    """Sample average treatment effect from a completely randomized experiment.

    ``fit(X, y, z)`` computes the estimate, a conservative standard error
    and a normal-approximation confidence interval for the units passed in.
    ``predict(X)`` evaluates the fitted potential-outcome predictions at new
    covariates and returns an ``(n, 2)`` array of (control, treated).

    Parameters
    ----------
    method : {"cal", "cal2", "gbcal", "gob", "lin", "unadj"}, default="cal"
        ``cal2`` appends the raw covariates to the calibration features.
    base_learner : {"ols", "logistic", "poisson"}, default="ols"
    level : float, default=0.95
        Confidence level of ``conf_int_``.

    Attributes
    ----------
    estimate_ : float
    std_error_ : float
    conf_int_ : tuple of float
    report_ : EstimateReport
    converged_ : bool
        Whether both base-learner fits converged.
    """

    def __init__(self, method: str = "cal", base_learner: str = "ols", level: float = 0.95):
        self.method = method
        self.base_learner = base_learner
        self.level = level

    def fit(self, X, y, z):
        if self.method not in ESTIMATORS:
            raise ValueError(f"method must be one of {ESTIMATORS}, got {self.method!r}")
        if self.base_learner not in BASE_LEARNERS:
            raise ValueError(f"base_learner must be one of {BASE_LEARNERS}")
        obs = ObservedExperiment(z=z, y=y, X=X)
        out = compute_estimators(obs, (self.method,), family=self.base_learner)[self.method]
        self.output_ = out
        self.report_ = report_from_output(obs, out, self.level)
        self.estimate_ = out.estimate
        self.std_error_ = self.report_.std_error
        self.conf_int_ = (self.report_.ci_lower, self.report_.ci_upper)
        self.converged_ = out.base_converged
        self.unbiasedness_gap_ = prediction_unbiasedness_gap(obs, out.mu0, out.mu1)
        self.n_features_in_ = obs.k
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "output_")
        X = as_design(X) if np.size(X) else np.zeros((len(X), 0))
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        out = self.output_
        if self.method == "unadj":
            m0, m1 = out.mu0[0], out.mu1[0]
            return np.column_stack([np.full(len(X), m0), np.full(len(X), m1)])
        if self.method == "lin":
            f0, f1 = out.calibrated.coefficients
            return np.column_stack([predict_linear(f0, X), predict_linear(f1, X)])
        mu0 = _predict(out.base_fits[0], X)
        mu1 = _predict(out.base_fits[1], X)
        if self.method == "gob":
            return np.column_stack([mu0, mu1])
        cp = out.calibrated
        columns = []
        for arm, fit in enumerate(cp.coefficients):
            feats = [mu1 if arm else mu0] if cp.own_arm_only else [mu0, mu1]
            if cp.extra_features is not None:
                feats = [X, *feats]
            columns.append(predict_linear(fit, np.column_stack(feats)))
        return np.column_stack(columns)
