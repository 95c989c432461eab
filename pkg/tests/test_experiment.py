import math
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from obcal.experiment import (
    DataFormatError,
    FinitePopulation,
    ObservedExperiment,
    TreatmentAllocation,
    enumerate_allocations,
    load_csv,
    load_population_csv,
    observe,
    sample_allocation,
)


class TestSampleAllocation:
    def test_two_units(self):
        rng = np.random.default_rng(1)
        first = sum(sample_allocation(2, 1, rng).z[0] for _ in range(10_000))
        assert first / 10_000 == pytest.approx(0.5, abs=0.02)

    def test_uniform_over_all_allocations(self):
        rng = np.random.default_rng(2)
        draws = 100_000
        counts = Counter(tuple(sample_allocation(6, 3, rng).z) for _ in range(draws))
        support = [tuple(a.z) for a in enumerate_allocations(6, 3)]
        assert set(counts) == set(support)
        freqs = np.array([counts[s] for s in support])
        assert np.all(np.abs(freqs / draws - 0.05) <= 0.01)
        assert stats.chisquare(freqs).pvalue > 1e-3

    def test_marginals(self):
        rng = np.random.default_rng(3)
        Z = np.array([sample_allocation(7, 3, rng).z for _ in range(100_000)])
        np.testing.assert_allclose(Z.mean(axis=0), 3 / 7, atol=0.01)

    def test_exact_size_and_determinism(self):
        a = sample_allocation(50, 15, np.random.default_rng(9))
        b = sample_allocation(50, 15, np.random.default_rng(9))
        assert a.n1 == 15 and a.n0 == 35
        np.testing.assert_array_equal(a.z, b.z)

    @pytest.mark.parametrize("N,n1", [(5, 5), (5, 0), (3, 4)])
    def test_degenerate(self, N, n1):
        with pytest.raises(ValueError):
            sample_allocation(N, n1, np.random.default_rng(0))


class TestEnumerate:
    def test_counts(self):
        assert len(list(enumerate_allocations(4, 2))) == 6
        assert len(list(enumerate_allocations(6, 3))) == 20

    @pytest.mark.parametrize("N", range(2, 13))
    def test_count_matches_binomial(self, N):
        for n1 in (1, N // 2, N - 1):
            if 1 <= n1 <= N - 1:
                allocs = [tuple(a.z) for a in enumerate_allocations(N, n1)]
                assert len(allocs) == len(set(allocs)) == math.comb(N, n1)

    def test_lexicographic(self):
        allocs = [tuple(int(v) for v in a.z) for a in enumerate_allocations(4, 2)]
        assert allocs[0] == (1, 1, 0, 0)
        assert allocs[-1] == (0, 0, 1, 1)
        assert allocs == sorted(allocs, reverse=True)

    def test_cap(self):
        with pytest.raises(ValueError, match="cap"):
            next(enumerate_allocations(30, 15))


class TestObserve:
    def test_reveals_by_arm(self):
        pop = FinitePopulation(y0=[0, 0], y1=[1, 1], X=np.zeros((2, 0)))
        obs = observe(pop, TreatmentAllocation([1, 0]))
        np.testing.assert_array_equal(obs.y, [1, 0])

    def test_one_control(self, rng):
        pop = FinitePopulation(y0=np.zeros(5), y1=np.ones(5), X=rng.normal(size=(5, 1)))
        obs = observe(pop, sample_allocation(5, 4, rng))
        assert (obs.y == 0).sum() == 1

    def test_null_effect(self, rng):
        y = rng.normal(size=8)
        pop = FinitePopulation(y0=y, y1=y, X=rng.normal(size=(8, 2)))
        for alloc in enumerate_allocations(8, 3):
            np.testing.assert_array_equal(observe(pop, alloc).y, y)

    def test_split_recovers_potential_outcomes(self, rng):
        pop = FinitePopulation(y0=rng.normal(size=20), y1=rng.normal(size=20), X=rng.normal(size=(20, 1)))
        alloc = sample_allocation(20, 8, rng)
        obs = observe(pop, alloc)
        np.testing.assert_array_equal(obs.y[obs.z], pop.y1[alloc.z])
        np.testing.assert_array_equal(obs.y[~obs.z], pop.y0[~alloc.z])

    def test_length_mismatch(self):
        pop = FinitePopulation(y0=[0, 0, 0], y1=[1, 1, 1], X=np.zeros((3, 0)))
        with pytest.raises(ValueError):
            observe(pop, TreatmentAllocation([1, 0]))

    def test_tau_bar(self):
        pop = FinitePopulation(y0=[0, 1, 2], y1=[1, 1, 5], X=np.zeros((3, 0)))
        assert pop.tau_bar == pytest.approx(4 / 3)

    def test_one_armed_experiment_rejected(self):
        with pytest.raises(ValueError, match="arm empty"):
            ObservedExperiment(z=[1, 1], y=[1, 2], X=np.zeros((2, 0)))


class TestLoadCSV:
    def write(self, tmp_path, text, name="data.csv"):
        p = tmp_path / name
        p.write_text(text, encoding="utf-8")
        return p

    def test_minimal(self, tmp_path):
        obs = load_csv(self.write(tmp_path, "z,y,x1\n1,1.0,0.3\n0,0.0,-0.2\n"))
        assert obs.N == 2 and obs.n1 == 1
        np.testing.assert_array_equal(obs.X[:, 0], [0.3, -0.2])

    def test_bad_treatment_names_row(self, tmp_path):
        p = self.write(tmp_path, "z,y,x1\n1,1,0\n0,0,1\n2,1,2\n")
        with pytest.raises(DataFormatError, match="row 3"):
            load_csv(p)

    def test_no_covariates(self, tmp_path):
        obs = load_csv(self.write(tmp_path, "z,y\n1,2\n0,1\n1,3\n"))
        assert obs.k == 0

    def test_unparseable_cell(self, tmp_path):
        with pytest.raises(DataFormatError, match="row 2, column 'x1'"):
            load_csv(self.write(tmp_path, "z,y,x1\n1,1,0\n0,0,abc\n"))

    def test_missing_cell(self, tmp_path):
        with pytest.raises(DataFormatError, match="row 1"):
            load_csv(self.write(tmp_path, "z,y,x1\n1,1,\n0,0,1\n"))

    def test_empty_file(self, tmp_path):
        with pytest.raises(DataFormatError, match="empty"):
            load_csv(self.write(tmp_path, ""))
        with pytest.raises(DataFormatError, match="no data"):
            load_csv(self.write(tmp_path, "z,y\n", "h.csv"))

    def test_one_arm(self, tmp_path):
        with pytest.raises(DataFormatError, match="arm empty"):
            load_csv(self.write(tmp_path, "z,y\n1,1\n1,0\n"))

    def test_bad_header(self, tmp_path):
        with pytest.raises(DataFormatError, match="header"):
            load_csv(self.write(tmp_path, "y,z\n1,1\n0,0\n"))

    def test_population_file(self, tmp_path):
        pop = load_population_csv(self.write(tmp_path, "y0,y1,x1\n0,1,0.5\n1,1,-1\n"))
        assert pop.N == 2
        assert pop.tau_bar == pytest.approx(0.5)
