"""Small argument checks used across the package."""

import numpy as np

from .errors import DomainError, PreconditionError


def check_open_interval(name, value, lo, hi):
    """Raise DomainError unless lo < value < hi."""
    value = float(value)
    if not (lo < value < hi):
        raise DomainError(f"{name}={value!r} must lie in the open interval ({lo}, {hi})")
    return value


def check_positive(name, value, strict=True):
    value = float(value)
    if not np.isfinite(value) or value < 0 or (strict and value == 0):
        kind = "positive" if strict else "non-negative"
        raise DomainError(f"{name}={value!r} must be {kind}")
    return value


def check_uniform_grid(x, rtol=1e-9):
    """Return the spacing of a strictly increasing uniform 1-d grid."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 4:
        raise PreconditionError("grid must be one-dimensional with at least 4 points")
    dx = np.diff(x)
    h = (x[-1] - x[0]) / (x.size - 1)
    if h <= 0 or np.max(np.abs(dx - h)) > rtol * max(1.0, abs(h)) * x.size:
        raise PreconditionError("grid must be uniform and strictly increasing")
    return h


def check_increasing(name, x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0 or np.any(np.diff(x) <= 0):
        raise DomainError(f"{name} must be a strictly increasing 1-d array")
    return x
