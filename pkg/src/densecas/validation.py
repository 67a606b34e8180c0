"""Input checks shared by the estimators."""

from __future__ import annotations

import numpy as np

from .core import wrap_angle


def check_observations(X, name="X"):
    """Coerce pairwise observations to a finite (m, 5) float array with wrapped angles."""
    if hasattr(X, "as_array"):
        X = X.as_array()
    elif isinstance(X, (list, tuple)) and X and hasattr(X[0], "as_array"):
        X = [o.as_array() for o in X]
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.ndim != 2 or X.shape[1] != 5:
        raise ValueError(f"{name} must have shape (n, 5), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    if np.any(X[:, 0] < 0):
        raise ValueError(f"{name} has negative ranges")
    X = X.copy()
    X[:, 1:3] = wrap_angle(X[:, 1:3])
    return X


def check_states(X, width, name="X"):
    if hasattr(X, "to_vector"):
        X = X.to_vector()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != width:
        raise ValueError(f"{name} must have {width} columns, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def check_temperature(temperature):
    if temperature is not None and temperature <= 0:
        raise ValueError("temperature must be positive")
    return temperature
