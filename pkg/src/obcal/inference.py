"""Conservative variance estimates and normal-approximation intervals."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from statistics import NormalDist

import numpy as np

from ._validation import check_both_arms
from .estimators import (
    CalibratedPair,
    EstimatorOutput,
    ObservedExperiment,
    prediction_unbiasedness_gap,
)
from .experiment import FinitePopulation


@dataclass(frozen=True)
class Diagnostics:
    prediction_unbiasedness_gap: float = 0.0
    base_converged: bool = True
    rank_deficient: bool = False


@dataclass(frozen=True)
class EstimateReport:
    estimator_name: str
    estimate: float
    std_error: float
    ci_lower: float
    ci_upper: float
    level: float
    N: int
    n1: int
    n0: int
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EstimateReport":
        d = dict(d)
        d["diagnostics"] = Diagnostics(**d.get("diagnostics", {}))
        return cls(**d)


def residual_variance(obs: ObservedExperiment, mu0, mu1) -> float:
    """``s1^2/n1 + s0^2/n0`` over within-arm residuals ``y - mu_z``.

    Sample variances use denominator ``n_z - 1``.
    """
    n0, n1 = check_both_arms(obs.z, minimum=2)
    r1 = obs.y[obs.z] - np.asarray(mu1)[obs.z]
    r0 = obs.y[~obs.z] - np.asarray(mu0)[~obs.z]
    return float(np.var(r1, ddof=1) / n1 + np.var(r0, ddof=1) / n0)


def variance_estimate(obs: ObservedExperiment, calpair: CalibratedPair) -> float:
    """Feasible, conservative variance of the calibrated estimator.

    Drops the treatment-effect heterogeneity term, which needs both
    potential outcomes of a unit, so it overstates the variance on average.
    """
    return residual_variance(obs, calpair.mu0_cal, calpair.mu1_cal)


def infeasible_variance(pop: FinitePopulation, z, mu0, mu1) -> float:
    """Studentising variance with residuals of both potential outcomes.

    Only computable in simulation, where ``y0`` and ``y1`` are both known:
    ``MSE(1)/n1 + MSE(0)/n0 - sum((e1 - e0)^2) / (N (N - 1))`` with
    ``e_z = y_z - mu_z`` over all ``N`` units.
    """
    z = np.asarray(z, dtype=bool)
    N = pop.N
    n1 = int(z.sum())
    n0 = N - n1
    e1 = pop.y1 - np.asarray(mu1)
    e0 = pop.y0 - np.asarray(mu0)
    mse1 = np.mean(e1**2)
    mse0 = np.mean(e0**2)
    return float(mse1 / n1 + mse0 / n0 - np.sum((e1 - e0) ** 2) / (N * (N - 1)))


def make_report(
    name: str,
    estimate: float,
    variance: float,
    level: float,
    obs: ObservedExperiment,
    diagnostics: Diagnostics | None = None,
) -> EstimateReport:
    if not 0 < level < 1:
        raise ValueError(f"level must be in (0, 1), got {level}")
    if not variance >= 0:
        raise ValueError(f"variance must be non-negative, got {variance}")
    se = float(np.sqrt(variance))
    half = NormalDist().inv_cdf(0.5 + level / 2) * se
    return EstimateReport(
        estimator_name=name,
        estimate=float(estimate),
        std_error=se,
        ci_lower=float(estimate - half),
        ci_upper=float(estimate + half),
        level=float(level),
        N=obs.N,
        n1=obs.n1,
        n0=obs.n0,
        diagnostics=diagnostics or Diagnostics(),
    )


def report_from_output(
    obs: ObservedExperiment, out: EstimatorOutput, level: float = 0.95
) -> EstimateReport:
    diag = Diagnostics(
        prediction_unbiasedness_gap=prediction_unbiasedness_gap(obs, out.mu0, out.mu1),
        base_converged=bool(out.base_converged),
        rank_deficient=bool(out.rank_deficient),
    )
    variance = residual_variance(obs, out.mu0, out.mu1)
    return make_report(out.name, out.estimate, variance, level, obs, diag)
