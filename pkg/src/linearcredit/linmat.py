"""Matrix exponentials and the two exponential integrals behind every price.

All closed-form prices in a linear credit model reduce to three objects
built from a drift matrix ``A``:

* ``e^{A h}``,
* ``int_0^h e^{A s} ds``,
* ``int_t^{tM} s e^{A (s - t)} ds``.

When ``A`` is well conditioned the integrals have explicit forms through
``A^{-1}``.  Otherwise they are read off the exponential of an augmented
block matrix (Van Loan's construction), which is valid for any ``A``.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import expm_multiply

from ._validation import check_scalar, check_square, check_vector
from .exceptions import InvalidInputError

__all__ = [
    "RCOND_THRESHOLD",
    "ACTION_DENSE_LIMIT",
    "expm",
    "expm_action",
    "exp_integral",
    "exp_integral_weighted",
    "exp_integrals",
    "rcond",
    "lhcc_astar_invertible",
]

#: Below this reciprocal condition number the explicit inverse is not trusted.
RCOND_THRESHOLD = 1e-10
#: Above this dimension ``expm_action`` avoids forming the full exponential.
ACTION_DENSE_LIMIT = 512


def expm(A) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a degree-13 Padé approximant.

    Parameters
    ----------
    A : array_like, shape (k, k)
        Finite square matrix.

    Returns
    -------
    ndarray, shape (k, k)
    """
    return sla.expm(check_square(A))


def expm_action(A, h: float, v) -> np.ndarray:
    """Return ``e^{A h} v`` without forming ``e^{A h}`` for large ``A``.

    Parameters
    ----------
    A : array_like, shape (k, k) or sparse matrix
    h : float
        Non-negative horizon.
    v : array_like, shape (k,) or (k, p)
    """
    h = check_scalar(h, "h", lo=0.0)
    if hasattr(A, "tocsr"):
        k = A.shape[0]
        v = np.asarray(v, dtype=float)
        if v.shape[0] != k:
            raise InvalidInputError(f"dimension mismatch: A is {k}x{k}, v has {v.shape[0]} rows")
        return expm_multiply(A * h, v) if h > 0 else v.copy()
    A = check_square(A)
    v = np.asarray(v, dtype=float)
    if v.shape[0] != A.shape[0]:
        raise InvalidInputError(f"dimension mismatch: A is {A.shape[0]}x{A.shape[0]}, v has {v.shape[0]} rows")
    if h == 0.0:
        return v.copy()
    if A.shape[0] > ACTION_DENSE_LIMIT:
        return expm_multiply(A * h, v)
    return sla.expm(A * h) @ v


def rcond(A) -> float:
    """Reciprocal 1-norm condition number (0 for singular matrices)."""
    A = check_square(A)
    with np.errstate(all="ignore"):
        c = np.linalg.cond(A, 1)
    if not np.isfinite(c) or c == 0:
        return 0.0
    return float(1.0 / c)


def _van_loan(A: np.ndarray, h: float, order: int) -> list[np.ndarray]:
    """Blocks of ``exp(h * [[A, I, 0], [0, 0, I], [0, 0, 0]])`` along the first row.

    With ``order=1`` the augmentation is ``[[A, I], [0, 0]]``.  The returned
    list holds ``e^{Ah}``, ``int_0^h e^{As} ds`` and, for ``order=2``,
    ``int_0^h (h - s) e^{As} ds``.
    """
    k = A.shape[0]
    K = (order + 1) * k
    C = np.zeros((K, K))
    C[:k, :k] = A
    for j in range(order):
        C[j * k:(j + 1) * k, (j + 1) * k:(j + 2) * k] = np.eye(k)
    E = sla.expm(C * h)
    return [E[:k, j * k:(j + 1) * k] for j in range(order + 1)]


def _choose(A: np.ndarray, method: str) -> str:
    if method not in ("auto", "inverse", "augmented"):
        raise InvalidInputError(f"unknown method {method!r}")
    if method == "auto":
        return "inverse" if rcond(A) > RCOND_THRESHOLD else "augmented"
    return method


def exp_integral(A, h: float, method: str = "auto") -> np.ndarray:
    """Return ``int_0^h e^{A s} ds``.

    Parameters
    ----------
    A : array_like, shape (k, k)
    h : float
        Non-negative horizon.
    method : {"auto", "inverse", "augmented"}
        ``"inverse"`` uses ``A^{-1}(e^{Ah} - I)``; ``"augmented"`` reads the
        integral off ``exp([[A, I], [0, 0]] h)``.  ``"auto"`` picks the
        inverse when the reciprocal condition number exceeds
        :data:`RCOND_THRESHOLD`.
    """
    A = check_square(A)
    h = check_scalar(h, "h", lo=0.0)
    k = A.shape[0]
    if h == 0.0:
        return np.zeros((k, k))
    if _choose(A, method) == "inverse":
        return np.linalg.solve(A, sla.expm(A * h) - np.eye(k))
    return _van_loan(A, h, 1)[1]


def exp_integral_weighted(A, t: float, tM: float, method: str = "auto") -> np.ndarray:
    """Return ``int_t^{tM} s e^{A (s - t)} ds``.

    The explicit branch evaluates
    ``h A^{-1} e^{Ah} + A^{-1}(t I - A^{-1})(e^{Ah} - I)`` with ``h = tM - t``.
    The augmented branch splits the integral into
    ``int_0^h u e^{Au} du + t int_0^h e^{Au} du``.
    """
    A = check_square(A)
    t = check_scalar(t, "t")
    tM = check_scalar(tM, "tM")
    if tM < t:
        raise InvalidInputError(f"tM={tM} precedes t={t}")
    k = A.shape[0]
    h = tM - t
    if h == 0.0:
        return np.zeros((k, k))
    if _choose(A, method) == "inverse":
        I = np.eye(k)
        E = sla.expm(A * h)
        Ainv_EmI = np.linalg.solve(A, E - I)
        return h * np.linalg.solve(A, E) + t * Ainv_EmI - np.linalg.solve(A, Ainv_EmI)
    _, F1, F2 = _van_loan(A, h, 2)
    return (h * F1 - F2) + t * F1


def exp_integrals(A, h: float, t: float = 0.0, method: str = "auto") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(e^{Ah}, int_0^h e^{As} ds, int_t^{t+h} s e^{A(s-t)} ds)`` together.

    Cheaper than three separate calls because one exponential is shared.
    """
    A = check_square(A)
    h = check_scalar(h, "h", lo=0.0)
    k = A.shape[0]
    if h == 0.0:
        return np.eye(k), np.zeros((k, k)), np.zeros((k, k))
    if _choose(A, method) == "inverse":
        I = np.eye(k)
        E = sla.expm(A * h)
        lu = sla.lu_factor(A)
        F1 = sla.lu_solve(lu, E - I)
        W = h * sla.lu_solve(lu, E) + t * F1 - sla.lu_solve(lu, F1)
        return E, F1, W
    E, F1, F2 = _van_loan(A, h, 2)
    return E, F1, (h * F1 - F2) + t * F1


def lhcc_astar_invertible(r: float, params) -> tuple[bool, float]:
    """Check invertibility of ``A - r I`` for a cascade model.

    For ``r > 0`` the cascade structure guarantees invertibility, so the
    answer is ``True`` regardless of the numerical estimate.  For ``r <= 0``
    the decision falls back to a numerical rank test.

    Returns
    -------
    invertible : bool
    rcond : float
        Reciprocal 1-norm condition number of ``A - r I``.
    """
    from .model import LhccParams, drift_matrix, lhcc_to_lhc

    if not isinstance(params, LhccParams):
        raise InvalidInputError("params must be LhccParams")
    r = check_scalar(r, "r")
    Astar = drift_matrix(lhcc_to_lhc(params, check=False).to_linear(), r)
    rc = rcond(Astar)
    if r > 0:
        return True, rc
    return bool(np.linalg.matrix_rank(Astar) == Astar.shape[0] and rc > RCOND_THRESHOLD), rc
