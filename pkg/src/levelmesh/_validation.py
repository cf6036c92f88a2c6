"""Small input-validation helpers shared across the package."""

from __future__ import annotations

import math

import numpy as np


def check_scalar(value, name: str, *, minimum=None, exclusive_minimum=None,
                 allow_inf: bool = False) -> float:
    """Validate a real scalar and return it as a float."""
    x = float(value)
    if math.isnan(x):
        raise ValueError(f"{name} must not be NaN")
    if not allow_inf and math.isinf(x):
        raise ValueError(f"{name} must be finite, got {x}")
    if minimum is not None and x < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {x}")
    if exclusive_minimum is not None and x <= exclusive_minimum:
        raise ValueError(f"{name} must be > {exclusive_minimum}, got {x}")
    return x


def check_int(value, name: str, *, minimum=None) -> int:
    i = int(value)
    if i != value:
        raise ValueError(f"{name} must be an integer, got {value!r}")
    if minimum is not None and i < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {i}")
    return i


def as_point(x, d: int) -> np.ndarray:
    """Coerce a single point to a float64 vector of length d."""
    p = np.asarray(x, dtype=np.float64).reshape(-1)
    if p.shape != (d,):
        raise ValueError(f"expected a point of dimension {d}, got shape {np.shape(x)}")
    return p


def as_point_array(X, d: int) -> np.ndarray:
    """Coerce input to an (n, d) float64 array of points."""
    A = np.asarray(X, dtype=np.float64)
    if A.ndim == 1:
        A = A.reshape(1, -1)
    if A.ndim != 2 or A.shape[1] != d:
        raise ValueError(f"expected points of shape (n, {d}), got {np.shape(X)}")
    return A


def check_in_domain(points: np.ndarray, lower: np.ndarray, upper: np.ndarray,
                    what: str = "point") -> None:
    if points.size == 0:
        return
    lo_ok = np.all(points >= lower - 1e-12 * np.abs(lower).max(initial=1.0))
    hi_ok = np.all(points <= upper + 1e-12 * np.abs(upper).max(initial=1.0))
    if not (lo_ok and hi_ok):
        bad = points[~(np.all(points >= lower, axis=-1) & np.all(points <= upper, axis=-1))]
        raise ValueError(
            f"{what} outside the domain [{lower.tolist()}, {upper.tolist()}]: "
            f"first offender {bad.reshape(-1, points.shape[-1])[0].tolist()}"
        )
