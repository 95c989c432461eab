"""Least squares and GLM fitting used as base learners and for calibration.

Two layers live here. The functional layer (:func:`fit_ols`,
:func:`fit_glm`, :func:`predict_linear`, :func:`predict_glm`) returns small
immutable fit records and is what the estimators call in their inner loops.
:class:`OLSRegressor` and :class:`GLMRegressor` wrap it in the usual
``fit``/``predict`` estimator interface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import DimensionError, as_design, as_vector, check_lengths

FAMILIES = ("logistic", "poisson")

SCORE_TOL = 1e-8
STEP_TOL = 1e-10
MAX_ITER = 100
# |linear predictor| beyond this on a training row means the MLE is running off
# to infinity (separation for logistic, an all-zero stratum for Poisson).
ETA_BOUND = 30.0
# A score-converged iterate still has to be a fixed point: the next Newton
# step must barely move the linear predictor.
ETA_STEP_TOL = 1e-4
POISSON_START_EPS = 1e-6


@dataclass(frozen=True)
class LinearFit:
    intercept: float
    slopes: np.ndarray
    rank_deficient: bool
    effective_rank: int


@dataclass(frozen=True)
class GlmFit:
    family: str
    intercept: float
    slopes: np.ndarray
    converged: bool
    iterations: int
    max_abs_score: float
    separated: bool = False


def _lstsq_min_norm(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, int]:
    if A.shape[1] == 0:
        return np.zeros(0), 0
    # rcond=None: cutoff is max(M, N) * eps * largest singular value
    coef, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    return coef, int(rank)


def _augment(X: np.ndarray, add_intercept: bool) -> np.ndarray:
    if add_intercept:
        return np.column_stack([np.ones(X.shape[0]), X])
    return X


def fit_ols(X, y, add_intercept: bool = True) -> LinearFit:
    """Minimum-norm least squares fit of ``y`` on the columns of ``X``.

    Rank deficiency (collinear or constant columns) is resolved by the SVD
    pseudoinverse of the design with its intercept column; the returned
    coefficients are the minimum-norm solution and fitted values are unique
    either way. The design is not centered, so rounding noise in computed
    features (for example predictions with a large offset) is judged
    against the full column scale.
    """
    X = as_design(X)
    y = as_vector(y)
    check_lengths(X=X, y=y)
    A = _augment(X, add_intercept)
    coef, rank = _lstsq_min_norm(A, y)
    if add_intercept:
        intercept, slopes = float(coef[0]), coef[1:]
    else:
        intercept, slopes = 0.0, coef
    return LinearFit(
        intercept=intercept,
        slopes=np.asarray(slopes, dtype=float),
        rank_deficient=rank < A.shape[1],
        effective_rank=rank,
    )


def predict_linear(fit: LinearFit, X) -> np.ndarray:
    X = as_design(X)
    if X.shape[1] != fit.slopes.size:
        raise DimensionError(
            f"X has {X.shape[1]} columns, fit expects {fit.slopes.size}"
        )
    return fit.intercept + X @ fit.slopes


def _inverse_link(family: str, eta: np.ndarray) -> np.ndarray:
    if family == "logistic":
        return expit(eta)
    return np.exp(eta)


def _check_family_outcome(family: str, y: np.ndarray) -> None:
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    if family == "logistic" and not np.all((y == 0) | (y == 1)):
        raise ValueError("logistic family requires outcomes in {0, 1}")
    if family == "poisson" and np.any(y < 0):
        raise ValueError("poisson family requires non-negative outcomes")


def glm_loglik(family: str, A: np.ndarray, y: np.ndarray, beta: np.ndarray) -> float:
    """Log-likelihood at ``beta`` for the design ``A`` (intercept included)."""
    eta = A @ beta
    if family == "logistic":
        return float(np.sum(y * eta - np.logaddexp(0.0, eta)))
    return float(np.sum(y * eta - np.exp(eta) - gammaln(y + 1.0)))


def glm_score(family: str, A: np.ndarray, y: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Gradient of :func:`glm_loglik`; both families use the canonical link."""
    return A.T @ (y - _inverse_link(family, A @ beta))


def fit_glm(
    X,
    y,
    family: str = "logistic",
    add_intercept: bool = True,
    tol: float = SCORE_TOL,
    max_iter: int = MAX_ITER,
) -> GlmFit:
    """Maximum likelihood fit by iteratively reweighted least squares.

    Never raises on non-existence of the MLE. Separation (logistic) or a
    diverging Poisson mean is detected through the linear predictor leaving
    ``[-30, 30]``; the last iterate is returned with ``converged=False``.
    """
    X = as_design(X)
    y = as_vector(y)
    check_lengths(X=X, y=y)
    _check_family_outcome(family, y)
    A = _augment(X, add_intercept)
    p = A.shape[1]

    beta = np.zeros(p)
    if add_intercept:
        ybar = y.mean()
        if family == "logistic":
            ybar = min(max(ybar, 1e-6), 1 - 1e-6)
            beta[0] = np.log(ybar / (1 - ybar))
        else:
            beta[0] = np.log(ybar + POISSON_START_EPS)

    converged = separated = False
    iterations = 0
    while True:
        eta = A @ beta
        if np.max(np.abs(eta), initial=0.0) > ETA_BOUND:
            separated = True
            break
        mu = _inverse_link(family, eta)
        w = mu * (1.0 - mu) if family == "logistic" else mu
        score = A.T @ (y - mu)
        if iterations >= max_iter:
            break
        hess = (A * w[:, None]).T @ A
        step, _ = _lstsq_min_norm(hess, score)
        score_ok = np.max(np.abs(score), initial=0.0) <= tol
        if score_ok and np.max(np.abs(A @ step), initial=0.0) <= ETA_STEP_TOL:
            converged = True
            break
        if np.max(np.abs(step), initial=0.0) <= STEP_TOL:
            beta = beta + step
            iterations += 1
            converged = True
            break
        beta = beta + step
        iterations += 1

    max_abs_score = float(np.max(np.abs(glm_score(family, A, y, beta)), initial=0.0))
    if add_intercept:
        intercept, slopes = float(beta[0]), beta[1:].copy()
    else:
        intercept, slopes = 0.0, beta.copy()
    return GlmFit(
        family=family,
        intercept=intercept,
        slopes=slopes,
        converged=converged,
        iterations=iterations,
        max_abs_score=max_abs_score,
        separated=separated,
    )


def predict_glm(fit: GlmFit, X) -> np.ndarray:
    X = as_design(X)
    if X.shape[1] != fit.slopes.size:
        raise DimensionError(
            f"X has {X.shape[1]} columns, fit expects {fit.slopes.size}"
        )
    return _inverse_link(fit.family, fit.intercept + X @ fit.slopes)


class OLSRegressor(RegressorMixin, BaseEstimator):
    """Ordinary least squares with a pseudoinverse fallback.

    Parameters
    ----------
    fit_intercept : bool, default=True

    Attributes
    ----------
    intercept_ : float
    coef_ : ndarray of shape (n_features,)
    rank_ : int
        Effective rank of the design, intercept included.
    rank_deficient_ : bool
    """

    def __init__(self, fit_intercept: bool = True):
        self.fit_intercept = fit_intercept

    def fit(self, X, y):
        self.fit_ = fit_ols(X, y, add_intercept=self.fit_intercept)
        self.intercept_ = self.fit_.intercept
        self.coef_ = self.fit_.slopes
        self.rank_ = self.fit_.effective_rank
        self.rank_deficient_ = self.fit_.rank_deficient
        self.n_features_in_ = self.coef_.size
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        return predict_linear(self.fit_, X)


class GLMRegressor(RegressorMixin, BaseEstimator):
    """Logistic or Poisson regression fitted by IRLS.

    ``predict`` returns the mean (a probability for the logistic family).
    Non-convergence is reported through ``converged_`` rather than raised.
    """

    def __init__(
        self,
        family: str = "logistic",
        fit_intercept: bool = True,
        tol: float = SCORE_TOL,
        max_iter: int = MAX_ITER,
    ):
        self.family = family
        self.fit_intercept = fit_intercept
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        self.fit_ = fit_glm(
            X,
            y,
            family=self.family,
            add_intercept=self.fit_intercept,
            tol=self.tol,
            max_iter=self.max_iter,
        )
        self.intercept_ = self.fit_.intercept
        self.coef_ = self.fit_.slopes
        self.converged_ = self.fit_.converged
        self.n_iter_ = self.fit_.iterations
        self.n_features_in_ = self.coef_.size
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        return predict_glm(self.fit_, X)
