import json

import numpy as np
import pytest

from obcal.estimators import CalibratedPair, calibrate, compute_estimators, fit_base_learners
from obcal.experiment import ObservedExperiment, observe, sample_allocation
from obcal.inference import (
    Diagnostics,
    EstimateReport,
    infeasible_variance,
    make_report,
    report_from_output,
    residual_variance,
    variance_estimate,
)
from obcal.regression import LinearFit
from obcal.simulation import DgpSpec, allocation_rng, generate_population, population_rng

from conftest import scalar_binary_experiment


def _pair(mu0, mu1):
    fit = LinearFit(0.0, np.zeros(0), False, 1)
    return CalibratedPair(mu0_cal=np.asarray(mu0, float), mu1_cal=np.asarray(mu1, float), coefficients=(fit, fit))


class TestVarianceEstimate:
    def test_perfect_fit_is_zero(self):
        obs = ObservedExperiment(z=[1, 1, 0, 0], y=[1, 2, 3, 4], X=np.zeros((4, 0)))
        assert variance_estimate(obs, _pair([0, 0, 3, 4], [1, 2, 0, 0])) == 0

    def test_intercept_only_is_neyman(self, rng):
        y = rng.normal(size=11)
        z = np.arange(11) < 4
        obs = ObservedExperiment(z=z, y=y, X=np.zeros((11, 0)))
        cp = calibrate(obs, fit_base_learners(obs, "ols"))
        expected = np.var(y[z], ddof=1) / 4 + np.var(y[~z], ddof=1) / 7
        assert variance_estimate(obs, cp) == pytest.approx(expected, rel=1e-12)

    def test_needs_two_per_arm(self):
        obs = ObservedExperiment(z=[1, 0, 0], y=[1, 2, 3], X=np.zeros((3, 0)))
        with pytest.raises(ValueError, match="at least 2"):
            residual_variance(obs, np.zeros(3), np.zeros(3))

    def test_scale_equivariance(self, rng):
        obs = scalar_binary_experiment(rng, N=60)
        base = compute_estimators(obs, ("cal", "lin"), family="ols")
        scaled_obs = ObservedExperiment(obs.z, 3.5 * obs.y, obs.X)
        scaled = compute_estimators(scaled_obs, ("cal", "lin"), family="ols")
        for name in base:
            a = report_from_output(obs, base[name])
            b = report_from_output(scaled_obs, scaled[name])
            assert b.std_error == pytest.approx(3.5 * a.std_error, rel=1e-8)
            assert b.estimate == pytest.approx(3.5 * a.estimate, rel=1e-8, abs=1e-12)

    def test_conservative_against_infeasible(self):
        spec = DgpSpec(500)
        pop = generate_population(spec, population_rng(3, 500, 0))
        hits = 0
        for b in range(1000):
            obs = observe(pop, sample_allocation(500, spec.n1, allocation_rng(3, 500, 0, b)))
            cp = calibrate(obs, fit_base_learners(obs, "logistic"))
            hits += variance_estimate(obs, cp) >= infeasible_variance(pop, obs.z, cp.mu0_cal, cp.mu1_cal)
        assert hits / 1000 >= 0.95

    def test_infeasible_variance_matches_neyman_identity_form(self, rng):
        # with constant predictions equal to the potential-outcome means the
        # formula is S1^2/n1 + S0^2/n0 - S_tau^2/N up to the N vs N-1 scaling
        N, n1 = 40, 15
        y0, y1 = rng.normal(size=N), rng.normal(size=N) + 1
        from obcal.experiment import FinitePopulation

        pop = FinitePopulation(y0=y0, y1=y1, X=np.zeros((N, 0)))
        z = np.arange(N) < n1
        v = infeasible_variance(pop, z, np.full(N, y0.mean()), np.full(N, y1.mean()))
        n0 = N - n1
        expected = (
            np.var(y1) / n1 + np.var(y0) / n0 - np.var(y1 - y0, ddof=0) * N / (N * (N - 1))
        )
        assert v == pytest.approx(expected, rel=1e-12)


class TestMakeReport:
    def _obs(self):
        return ObservedExperiment(z=[1, 1, 0, 0], y=[1, 0, 1, 0], X=np.zeros((4, 0)))

    def test_standard_normal_interval(self):
        r = make_report("cal", 0.0, 1.0, 0.95, self._obs())
        assert r.ci_lower == pytest.approx(-1.959964, abs=1e-6)
        assert r.ci_upper == pytest.approx(1.959964, abs=1e-6)
        assert (r.N, r.n1, r.n0) == (4, 2, 2)

    def test_zero_variance(self):
        r = make_report("cal", 0.3, 0.0, 0.9, self._obs())
        assert r.ci_lower == r.ci_upper == 0.3
        assert r.std_error == 0

    @pytest.mark.parametrize("level", [1.0, 0.0, -0.1, 1.5])
    def test_invalid_level(self, level):
        with pytest.raises(ValueError):
            make_report("cal", 0.0, 1.0, level, self._obs())

    def test_negative_variance(self):
        with pytest.raises(ValueError):
            make_report("cal", 0.0, -1.0, 0.95, self._obs())

    def test_width_monotone_in_level(self):
        widths = [
            make_report("cal", 0.2, 0.4, lvl, self._obs()).ci_upper
            - make_report("cal", 0.2, 0.4, lvl, self._obs()).ci_lower
            for lvl in (0.5, 0.8, 0.9, 0.95, 0.99)
        ]
        assert np.all(np.diff(widths) > 0)

    def test_width_formula(self):
        from statistics import NormalDist

        r = make_report("cal", 1.0, 0.25, 0.9, self._obs())
        assert r.ci_upper - r.ci_lower == pytest.approx(2 * NormalDist().inv_cdf(0.95) * 0.5)
        assert r.ci_lower <= r.estimate <= r.ci_upper

    def test_round_trip(self):
        r = make_report("gob", 0.1234567890123, 0.0101, 0.95, self._obs(),
                        Diagnostics(1e-12, False, True))
        back = EstimateReport.from_dict(json.loads(json.dumps(r.to_dict())))
        assert back == r


def test_coverage_moderate_scale():
    spec = DgpSpec(600)
    pop = generate_population(spec, population_rng(21, 600, 0))
    covered = 0
    for b in range(300):
        obs = observe(pop, sample_allocation(600, spec.n1, allocation_rng(21, 600, 0, b)))
        out = compute_estimators(obs, ("cal",), family="logistic")["cal"]
        rep = report_from_output(obs, out)
        covered += rep.ci_lower <= pop.tau_bar <= rep.ci_upper
    assert covered / 300 >= 0.93
