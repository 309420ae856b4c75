"""Input validation helpers shared by the estimators."""

import numbers

import numpy as np
from sklearn.utils.validation import check_array


def check_snapshots(X, min_samples=1, n_features=None):
    """Validate a ``(n_snapshots, n_features)`` float64 array."""
    X = check_array(X, dtype=np.float64, ensure_min_samples=min_samples)
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(
            f"X has {X.shape[1]} features, but the estimator was fitted "
            f"with {n_features}")
    return X


def check_trajectory(Q, min_steps=2):
    """Validate a reduced trajectory stored with time along the rows."""
    return check_array(Q, dtype=np.float64, ensure_min_samples=min_steps)


def check_positive(name, value):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) \
            or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def check_positive_grid(name, values):
    values = np.atleast_1d(np.asarray(values, dtype=np.float64))
    if values.ndim != 1 or values.size == 0:
        raise ValueError(f"{name} must be a nonempty 1-D list of candidates")
    if not np.all(np.isfinite(values)) or np.any(values <= 0):
        raise ValueError(f"{name} candidates must be positive and finite")
    return values
