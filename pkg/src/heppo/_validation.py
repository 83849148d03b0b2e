"""Input validation helpers shared by the datapath and hardware models."""

from __future__ import annotations

import numpy as np


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


def as_finite_1d(x, name: str = "x", allow_empty: bool = False) -> np.ndarray:
    """Return ``x`` as a contiguous float64 vector, rejecting NaN/Inf.

    The error message names the first offending index so callers feeding
    long trajectories can locate the bad sample.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not allow_empty and arr.size == 0:
        raise ValidationError(f"{name} must be nonempty")
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        i = int(bad[0])
        raise ValidationError(f"{name}[{i}] is not finite ({arr[i]!r})")
    return np.ascontiguousarray(arr)


def check_finite_scalar(x, name: str = "x") -> float:
    try:
        v = float(x)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{name} must be a real number, got {x!r}") from exc
    if not np.isfinite(v):
        raise ValidationError(f"{name} is not finite ({v!r})")
    return v


def check_decay(c: float) -> float:
    c = check_finite_scalar(c, "C")
    if not 0.0 <= c <= 1.0:
        raise ValidationError(f"decay C must lie in [0, 1], got {c}")
    return c


def check_positive_int(n, name: str, minimum: int = 1) -> int:
    if isinstance(n, bool) or int(n) != n:
        raise ValidationError(f"{name} must be an integer, got {n!r}")
    n = int(n)
    if n < minimum:
        raise ValidationError(f"{name} must be >= {minimum}, got {n}")
    return n
