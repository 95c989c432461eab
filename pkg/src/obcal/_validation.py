"""Input validation helpers shared by the estimators and the data model."""

from __future__ import annotations

import numpy as np


class DimensionError(ValueError):
    """Array shapes do not agree."""


def as_design(X, name: str = "X") -> np.ndarray:
    """Coerce ``X`` to a finite 2-D float array.

    A 1-D input is read as a single column. A ``(n, 0)`` array is a valid
    design with no covariates.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {X.shape}")
    if X.shape[0] < 1:
        raise DimensionError(f"{name} must have at least one row")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def as_vector(y, name: str = "y") -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim == 2 and y.shape[1] == 1:
        y = y[:, 0]
    if y.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError(f"{name} contains non-finite values")
    return y


def as_treatment(z, name: str = "z") -> np.ndarray:
    """Coerce ``z`` to a boolean vector, rejecting anything other than 0/1."""
    arr = np.asarray(z)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.dtype == bool:
        return arr.copy()
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError(f"{name} must contain only 0 and 1")
    return arr.astype(bool)


def check_lengths(**arrays) -> int:
    """Return the common first-axis length of the given arrays."""
    lengths = {k: len(v) for k, v in arrays.items() if v is not None}
    if len(set(lengths.values())) > 1:
        detail = ", ".join(f"{k}={n}" for k, n in lengths.items())
        raise DimensionError(f"length mismatch: {detail}")
    return next(iter(lengths.values()))


def check_both_arms(z: np.ndarray, minimum: int = 1) -> tuple[int, int]:
    n1 = int(z.sum())
    n0 = int(z.size - n1)
    if n1 < minimum or n0 < minimum:
        if min(n0, n1) == 0:
            raise ValueError(f"arm empty (n0={n0}, n1={n1})")
        raise ValueError(
            f"each arm needs at least {minimum} units (n0={n0}, n1={n1})"
        )
    return n0, n1
