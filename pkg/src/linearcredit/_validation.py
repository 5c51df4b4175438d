"""Small input-validation helpers in the spirit of ``sklearn.utils.validation``."""

from __future__ import annotations

import numpy as np

from .exceptions import InvalidInputError


def check_finite_array(a, name: str, ndim: int | None = None, dtype=float) -> np.ndarray:
    """Return ``a`` as a finite float array, optionally checking its rank."""
    try:
        arr = np.asarray(a, dtype=dtype)
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"{name}: cannot convert to a numeric array") from exc
    if ndim is not None and arr.ndim != ndim:
        raise InvalidInputError(f"{name}: expected {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name}: non-finite entries")
    return arr


def check_square(A, name: str = "A") -> np.ndarray:
    """Return ``A`` as a finite square float matrix."""
    A = check_finite_array(A, name)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise InvalidInputError(f"{name}: expected a non-empty square matrix, got shape {A.shape}")
    return A


def check_vector(v, name: str, size: int | None = None) -> np.ndarray:
    """Return ``v`` as a finite 1-d float array of the given length."""
    v = np.atleast_1d(check_finite_array(v, name))
    if v.ndim != 1:
        raise InvalidInputError(f"{name}: expected a vector, got shape {v.shape}")
    if size is not None and v.shape[0] != size:
        raise InvalidInputError(f"{name}: expected length {size}, got {v.shape[0]}")
    return v


def check_scalar(x, name: str, *, lo: float | None = None, hi: float | None = None) -> float:
    """Return ``x`` as a finite float within the closed range ``[lo, hi]``."""
    try:
        val = float(x)
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"{name}: not a real number") from exc
    if not np.isfinite(val):
        raise InvalidInputError(f"{name}: not finite")
    if lo is not None and val < lo:
        raise InvalidInputError(f"{name}={val} below {lo}")
    if hi is not None and val > hi:
        raise InvalidInputError(f"{name}={val} above {hi}")
    return val


def check_horizon(t: float, tM: float) -> tuple[float, float]:
    """Validate an interval ``t <= tM`` and return it as floats."""
    t = check_scalar(t, "t")
    tM = check_scalar(tM, "tM")
    if tM < t:
        raise InvalidInputError(f"maturity {tM} precedes valuation time {t}")
    return t, tM


def check_recovery(delta: float) -> float:
    """Recovery rates live in [0, 1]."""
    return check_scalar(delta, "recovery", lo=0.0, hi=1.0)
