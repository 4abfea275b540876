"""Small input-validation helpers used by the public API."""

import numpy as np

from .exceptions import DomainError


def as_float_array(x, name, shape=None):
    """Coerce to a float64 ndarray, optionally enforcing an exact shape."""
    arr = np.asarray(x, dtype=float)
    if shape is not None and arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_state(y, d=2):
    """Validate a single state vector of dimension d."""
    return as_float_array(y, "y", shape=(d,))


def check_points(X):
    """Validate an (m, 3) array of (t, y1, y2) query points."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected an (m, 3) array of (t, y1, y2) points, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("query points contain non-finite entries")
    return arr


def check_wealth(x):
    """Wealth must be strictly positive for power utility."""
    x = float(x)
    if not x > 0.0:
        raise DomainError(f"wealth must be positive, got {x}")
    return x
