"""Input validation helpers used at the public API boundaries."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ConfigurationError


def check_unit_interval(values, name: str) -> np.ndarray:
    """Return ``values`` as a float64 array after checking every entry is in [0, 1]."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ConfigurationError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ConfigurationError(f"{name} must not be empty")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} contains non-finite entries")
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ConfigurationError(f"{name} entries must lie in [0, 1]")
    return arr


def check_positive_int(value, name: str) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
        raise ConfigurationError(f"{name} must be an integer, got {value!r}")
    if value < 1:
        raise ConfigurationError(f"{name} must be >= 1, got {value}")
    return int(value)


def check_binary_mask(values, name: str) -> np.ndarray:
    """Return ``values`` as an int8 array of {0, 1} entries."""
    arr = np.asarray(values)
    if arr.ndim != 1 or arr.size == 0:
        raise ConfigurationError(f"{name} must be a non-empty one-dimensional vector")
    if not np.all(np.isin(arr, (0, 1))):
        raise ConfigurationError(f"{name} entries must be 0 or 1")
    return arr.astype(np.int8)


def check_lengths_match(a: Sequence, b: Sequence, what: str) -> None:
    if len(a) != len(b):
        raise ConfigurationError(f"{what}: lengths differ ({len(a)} vs {len(b)})")
