"""Finite populations, complete randomization, and CSV ingestion."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from ._validation import (
    DimensionError,
    as_design,
    as_treatment,
    as_vector,
    check_both_arms,
    check_lengths,
)

ENUMERATION_CAP = 200_000


class DataFormatError(ValueError):
    """A CSV file does not satisfy the ingestion contract."""


@dataclass(frozen=True)
class FinitePopulation:
    """Both potential outcomes and covariates for all ``N`` units."""

    y0: np.ndarray
    y1: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        y0 = as_vector(self.y0, "y0")
        y1 = as_vector(self.y1, "y1")
        X = as_design(self.X) if np.size(self.X) else np.zeros((y0.size, 0))
        check_lengths(y0=y0, y1=y1, X=X)
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "X", X)

    @property
    def N(self) -> int:
        return self.y0.size

    @property
    def tau_bar(self) -> float:
        return float(np.mean(self.y1 - self.y0))


@dataclass(frozen=True)
class TreatmentAllocation:
    z: np.ndarray

    def __post_init__(self):
        z = as_treatment(self.z)
        check_both_arms(z)
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    @property
    def N(self) -> int:
        return self.z.size

    @property
    def n1(self) -> int:
        return int(self.z.sum())

    @property
    def n0(self) -> int:
        return self.N - self.n1


@dataclass(frozen=True)
class ObservedExperiment:
    """One realised experiment: allocation, revealed outcomes, covariates."""

    z: np.ndarray
    y: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        z = self.z.z if isinstance(self.z, TreatmentAllocation) else as_treatment(self.z)
        y = as_vector(self.y)
        X = np.asarray(self.X, dtype=float)
        X = as_design(X) if X.size else np.zeros((y.size, 0))
        check_lengths(z=z, y=y, X=X)
        check_both_arms(z)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)

    @property
    def N(self) -> int:
        return self.z.size

    @property
    def n1(self) -> int:
        return int(self.z.sum())

    @property
    def n0(self) -> int:
        return self.N - self.n1

    @property
    def k(self) -> int:
        return self.X.shape[1]


def sample_allocation(N: int, n1: int, rng: np.random.Generator) -> TreatmentAllocation:
    """Draw uniformly from the allocations with exactly ``n1`` treated units.

    Partial Fisher-Yates: the first ``n1`` positions of a partially shuffled
    index vector are treated.
    """
    if not 1 <= n1 <= N - 1:
        raise ValueError(f"n1 must be in [1, N-1]; got n1={n1}, N={N}")
    idx = np.arange(N)
    swaps = rng.integers(np.arange(n1), N)
    for i, j in enumerate(swaps):
        idx[i], idx[j] = idx[j], idx[i]
    z = np.zeros(N, dtype=bool)
    z[idx[:n1]] = True
    return TreatmentAllocation(z)


def enumerate_allocations(
    N: int, n1: int, cap: int = ENUMERATION_CAP
) -> Iterator[TreatmentAllocation]:
    """Yield every allocation with ``n1`` treated units, lexicographically.

    Order is lexicographic in the treated index sets, so ``[1,1,0,0]``
    precedes ``[1,0,1,0]``.
    """
    if not 1 <= n1 <= N - 1:
        raise ValueError(f"n1 must be in [1, N-1]; got n1={n1}, N={N}")
    count = math.comb(N, n1)
    if count > cap:
        raise ValueError(
            f"C({N}, {n1}) = {count} allocations exceeds the enumeration cap {cap}"
        )
    for treated in itertools.combinations(range(N), n1):
        z = np.zeros(N, dtype=bool)
        z[list(treated)] = True
        yield TreatmentAllocation(z)


def observe(pop: FinitePopulation, alloc: TreatmentAllocation) -> ObservedExperiment:
    z = alloc.z if isinstance(alloc, TreatmentAllocation) else as_treatment(alloc)
    if z.size != pop.N:
        raise DimensionError(f"allocation has length {z.size}, population has {pop.N}")
    return ObservedExperiment(z=z, y=np.where(z, pop.y1, pop.y0), X=pop.X)


def _read_numeric_csv(path, required: tuple[str, ...]) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if tuple(header[: len(required)]) != required:
            raise DataFormatError(
                f"{path}: header must start with {','.join(required)}, "
                f"got {','.join(header)}"
            )
        rows = []
        # row numbers count data rows from 1, header excluded
        for rownum, record in enumerate(reader, start=1):
            if not record:
                continue
            if len(record) != len(header):
                raise DataFormatError(
                    f"{path}: row {rownum} has {len(record)} fields, "
                    f"expected {len(header)}"
                )
            values = []
            for col, cell in zip(header, record):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataFormatError(
                        f"{path}: row {rownum}, column {col!r}: "
                        f"cannot parse {cell!r} as a number"
                    ) from None
                if not math.isfinite(v):
                    raise DataFormatError(
                        f"{path}: row {rownum}, column {col!r}: non-finite value"
                    )
                values.append(v)
            rows.append(values)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return header, np.array(rows, dtype=float)


def load_csv(path) -> ObservedExperiment:
    """Read an experiment from a ``z,y,x1,...,xk`` CSV file."""
    header, data = _read_numeric_csv(path, ("z", "y"))
    z = data[:, 0]
    bad = np.flatnonzero((z != 0) & (z != 1))
    if bad.size:
        raise DataFormatError(
            f"{path}: row {bad[0] + 1}, column 'z': treatment must be 0 or 1, "
            f"got {z[bad[0]]:g}"
        )
    z = z.astype(bool)
    if z.all() or not z.any():
        raise DataFormatError(f"{path}: arm empty (n1={int(z.sum())}, N={z.size})")
    return ObservedExperiment(z=z, y=data[:, 1], X=data[:, 2:])


def load_population_csv(path) -> FinitePopulation:
    """Read a population from a ``y0,y1,x1,...,xk`` CSV file."""
    _, data = _read_numeric_csv(path, ("y0", "y1"))
    return FinitePopulation(y0=data[:, 0], y1=data[:, 1], X=data[:, 2:])
