"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


class DimensionMismatch(ValueError):
    """Raised when an array does not have the shape a routine requires."""


def as_float_array(x, name: str, ndim: int | None = None) -> np.ndarray:
    """Coerce to a float64 ndarray and optionally enforce dimensionality."""
    arr = np.asarray(x, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise DimensionMismatch(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_signal(x, name: str) -> np.ndarray:
    """Coerce to a (T, channels) float array; 1-D input becomes a single channel."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be (T,) or (T, channels), got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise DimensionMismatch(f"{name} must contain at least one sample")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_shape(x: np.ndarray, shape: tuple, name: str) -> np.ndarray:
    """Check an exact shape; entries of ``shape`` equal to -1 are free."""
    actual = x.shape
    ok = len(actual) == len(shape) and all(
        want in (-1, got) for want, got in zip(shape, actual)
    )
    if not ok:
        raise DimensionMismatch(f"{name} must have shape {shape}, got {actual}")
    return x


def check_positive_int(value, name: str) -> int:
    if int(value) != value or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)
