"""Binary-outcome simulation study and exact randomization distributions.

Each population ``s`` and each allocation ``b`` within it draw from their own
``SeedSequence`` keyed by ``(N, s)`` and ``(N, s, b)``. A population is
processed start to finish by one worker, and population results are combined
with exactly rounded sums, so tables are bit-identical for any worker count.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .estimators import BASE_LEARNERS, ESTIMATORS, compute_estimators
from .experiment import (
    ENUMERATION_CAP,
    FinitePopulation,
    enumerate_allocations,
    observe,
    sample_allocation,
)

logger = logging.getLogger(__name__)

DEFAULT_ESTIMATORS = ("gob", "gbcal", "cal")
SKIP_FLAG_FRACTION = 0.05


def prob_control(x):
    return np.exp(-((x + 0.85) ** 2) / 3.38)


def prob_treated(x):
    return np.exp(-((x - 1.0) ** 2) / 2.0)


@dataclass(frozen=True)
class DgpSpec:
    N: int
    n1_fraction: float = 0.3
    covariate_range: tuple[float, float] = (-5.0, 5.0)
    name: str = "gaussian_bumps"

    def __post_init__(self):
        if self.name != "gaussian_bumps":
            raise ValueError(f"unknown DGP {self.name!r}")
        if not 0 < self.n1_fraction < 1:
            raise ValueError(f"n1_fraction must be in (0, 1), got {self.n1_fraction}")
        if self.n1 < 1 or self.n1 > self.N - 1:
            raise ValueError(
                f"N={self.N} with n1_fraction={self.n1_fraction} leaves an arm empty"
            )
        lo, hi = self.covariate_range
        if not lo < hi:
            raise ValueError(f"bad covariate range {self.covariate_range}")

    @property
    def n1(self) -> int:
        # tolerance absorbs 0.3 * N landing a hair under an integer
        return int(math.floor(self.n1_fraction * self.N + 1e-9))


def generate_population(
    spec: DgpSpec,
    rng: np.random.Generator,
    p0: Callable = prob_control,
    p1: Callable = prob_treated,
) -> FinitePopulation:
    """Scalar uniform covariate and binary outcomes from one shared uniform.

    ``y_i(z) = 1{U_i <= p_z(x_i)}`` with the same ``U_i`` for both arms.
    """
    lo, hi = spec.covariate_range
    x = rng.uniform(lo, hi, size=spec.N)
    u = rng.uniform(0.0, 1.0, size=spec.N)
    y0 = (u <= p0(x)).astype(float)
    y1 = (u <= p1(x)).astype(float)
    return FinitePopulation(y0=y0, y1=y1, X=x[:, None])


def population_rng(seed: int, N: int, s: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(N, s)))


def allocation_rng(seed: int, N: int, s: int, b: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(N, s, b)))


@dataclass
class MonteCarloRow:
    N: int
    ratios: dict[str, float]
    skipped: int = 0
    flagged_populations: int = 0
    excluded_populations: int = 0


@dataclass
class MonteCarloTable:
    rows: list[MonteCarloRow]
    S: int
    B: int
    seed: int
    family: str
    estimators: tuple[str, ...]
    runtime_seconds: float = 0.0
    n1_fraction: float = 0.3

    def to_dict(self) -> dict:
        d = asdict(self)
        d["estimators"] = list(self.estimators)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MonteCarloTable":
        d = dict(d)
        d["rows"] = [MonteCarloRow(**r) for r in d["rows"]]
        d["estimators"] = tuple(d["estimators"])
        return cls(**d)

    def ratio(self, N: int, name: str) -> float:
        for row in self.rows:
            if row.N == N:
                return row.ratios[name]
        raise KeyError(N)


@dataclass(frozen=True)
class PopulationTask:
    spec: DgpSpec
    s: int
    B: int
    family: str
    estimators: tuple[str, ...]
    seed: int


@dataclass
class PopulationResult:
    s: int
    variances: dict[str, float]
    skipped: int = 0
    estimates: Optional[np.ndarray] = field(default=None, repr=False)


def run_population(task: PopulationTask) -> PopulationResult:
    spec = task.spec
    pop = generate_population(spec, population_rng(task.seed, spec.N, task.s))
    names = ("unadj",) + tuple(e for e in task.estimators if e != "unadj")
    values = np.full((task.B, len(names)), np.nan)
    skipped = 0
    for b in range(task.B):
        alloc = sample_allocation(
            spec.N, spec.n1, allocation_rng(task.seed, spec.N, task.s, b)
        )
        obs = observe(pop, alloc)
        try:
            outs = compute_estimators(obs, names, family=task.family)
        except (ValueError, np.linalg.LinAlgError) as exc:
            skipped += 1
            logger.debug("population %d allocation %d skipped: %s", task.s, b, exc)
            continue
        values[b] = [outs[n].estimate for n in names]
    kept = values[~np.isnan(values).any(axis=1)]
    if kept.shape[0] >= 2:
        var = np.var(kept, axis=0, ddof=1)
    else:
        var = np.full(len(names), np.nan)
    return PopulationResult(
        s=task.s,
        variances=dict(zip(names, map(float, var))),
        skipped=skipped,
        estimates=values,
    )


def _map(fn, tasks, workers: int):
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def run_monte_carlo(
    spec: DgpSpec,
    S: int,
    B: int,
    family: str = "logistic",
    estimators: Sequence[str] = DEFAULT_ESTIMATORS,
    seed: int = 0,
    workers: int = 1,
) -> MonteCarloRow:
    """Average over populations of ``var(estimator) / var(unadj)``.

    Allocations whose estimation raises are excluded from that population's
    variances and counted in ``skipped``; populations with more than 5% of
    allocations skipped are counted in ``flagged_populations``. A population
    whose difference-in-means variance is zero or undefined is left out of
    the average and counted in ``excluded_populations``.
    """
    if S < 1:
        raise ValueError(f"S must be at least 1, got {S}")
    if B < 2:
        raise ValueError(f"B must be at least 2 for a variance, got {B}")
    if family not in BASE_LEARNERS:
        raise ValueError(f"unknown family {family!r}")
    estimators = tuple(e for e in estimators if e != "unadj")
    bad = set(estimators) - set(ESTIMATORS)
    if bad or not estimators:
        raise ValueError(f"invalid estimator set {estimators}")
    tasks = [PopulationTask(spec, s, B, family, estimators, seed) for s in range(S)]
    results = sorted(_map(run_population, tasks, workers), key=lambda r: r.s)

    per_estimator: dict[str, list[float]] = {e: [] for e in estimators}
    excluded = flagged = skipped = 0
    for res in results:
        skipped += res.skipped
        if res.skipped > SKIP_FLAG_FRACTION * B:
            flagged += 1
        base = res.variances["unadj"]
        if not base > 0:
            excluded += 1
            continue
        for e in estimators:
            per_estimator[e].append(res.variances[e] / base)
    ratios = {
        e: (math.fsum(v) / len(v) if v else float("nan"))
        for e, v in per_estimator.items()
    }
    return MonteCarloRow(
        N=spec.N,
        ratios=ratios,
        skipped=skipped,
        flagged_populations=flagged,
        excluded_populations=excluded,
    )


def simulate_table(
    N_values: Sequence[int],
    S: int,
    B: int,
    family: str = "logistic",
    estimators: Sequence[str] = DEFAULT_ESTIMATORS,
    seed: int = 0,
    n1_fraction: float = 0.3,
    workers: int = 1,
) -> MonteCarloTable:
    start = time.perf_counter()
    rows = []
    for N in N_values:
        spec = DgpSpec(N=int(N), n1_fraction=n1_fraction)
        rows.append(run_monte_carlo(spec, S, B, family, estimators, seed, workers))
        logger.info("N=%d done: %s", N, rows[-1].ratios)
    return MonteCarloTable(
        rows=rows,
        S=S,
        B=B,
        seed=seed,
        family=family,
        estimators=tuple(e for e in estimators if e != "unadj"),
        runtime_seconds=time.perf_counter() - start,
        n1_fraction=n1_fraction,
    )


@dataclass
class ExactDistribution:
    values: np.ndarray
    mean: float
    variance: float

    def to_dict(self) -> dict:
        return {"mean": self.mean, "variance": self.variance, "values": self.values.tolist()}


def exact_randomization_distribution(
    pop: FinitePopulation,
    n1: int,
    family: str = "ols",
    estimators: Sequence[str] = ("unadj",),
    cap: int = ENUMERATION_CAP,
) -> dict[str, ExactDistribution]:
    """Every estimator's value under every allocation of ``n1`` treated units.

    Variances are over the uniform allocation distribution (denominator
    equal to the number of allocations).
    """
    names = tuple(estimators)
    rows = []
    for alloc in enumerate_allocations(pop.N, n1, cap=cap):
        outs = compute_estimators(observe(pop, alloc), names, family=family)
        rows.append([outs[n].estimate for n in names])
    values = np.array(rows)
    return {
        n: ExactDistribution(
            values=values[:, j],
            mean=float(np.mean(values[:, j])),
            variance=float(np.var(values[:, j])),
        )
        for j, n in enumerate(names)
    }
