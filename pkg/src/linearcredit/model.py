"""Model specifications for linear credit risk.

A firm's survival process is ``S = a^T Y`` where ``(Y, X)`` has linear
drift

    dY = (c Y + gamma_block X) dt + dM^Y,
    dX = (b Y + beta X) dt + dM^X,

so every conditional expectation of ``(Y, X)`` is a matrix exponential of
the drift matrix ``A = [[c, gamma_block], [b, beta]]``.

The linear hypercube (LHC) model is the diffusive special case with a
scalar ``Y`` and

    dY = -gamma^T X dt,
    dX_i = (b_i Y + (beta X)_i) dt + sigma_i sqrt(X_i (Y - X_i)) dW_i,

living on ``E = {(y, x): 0 < y <= 1, 0 <= x_i <= y}``.  The cascade (LHCC)
sub-family makes factor ``i`` revert to ``theta_i`` times factor ``i + 1``
and the last factor revert to ``theta_m Y``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_finite_array, check_scalar, check_vector
from .exceptions import ConstraintError, DomainError, InvalidInputError

__all__ = [
    "LinearModel",
    "LhcParams",
    "LhccParams",
    "State",
    "ValidationReport",
    "MprReport",
    "CASCADE_TOL",
    "validate_lhc",
    "lhcc_to_lhc",
    "drift_matrix",
    "intensity",
    "canonicalize",
    "mpr_lambda",
    "validate_mpr",
    "one_factor_from_roots",
    "constant_intensity_model",
]

#: Absolute tolerance for the cascade constraint ``theta_i <= 1 - gamma1/kappa_i``.
CASCADE_TOL = 1e-12


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LinearModel:
    """Generic linear survival model with ``n`` survival and ``m`` factor components.

    Attributes
    ----------
    c : ndarray, shape (n, n)
    gamma_block : ndarray, shape (n, m)
    b : ndarray, shape (m, n)
    beta : ndarray, shape (m, m)
    a : ndarray, shape (n,)
        Non-negative survival weights summing to one.
    """

    c: np.ndarray
    gamma_block: np.ndarray
    b: np.ndarray
    beta: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        c = check_finite_array(self.c, "c")
        n = int(np.atleast_1d(self.a).shape[0])
        c = c.reshape(n, n)
        g = check_finite_array(self.gamma_block, "gamma_block")
        m = g.size // n if n else 0
        try:
            g = g.reshape(n, m)
            b = check_finite_array(self.b, "b").reshape(m, n)
            beta = check_finite_array(self.beta, "beta").reshape(m, m)
        except ValueError as exc:
            raise InvalidInputError(f"inconsistent block shapes: {exc}") from exc
        a = check_vector(self.a, "a", n)
        if np.any(a < 0) or abs(a.sum() - 1.0) > 1e-12:
            raise InvalidInputError("survival weights a must be non-negative and sum to one")
        for name, val in (("c", c), ("gamma_block", g), ("b", b), ("beta", beta), ("a", a)):
            object.__setattr__(self, name, _freeze(val))

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def m(self) -> int:
        return self.beta.shape[0]

    @property
    def dim(self) -> int:
        return self.n + self.m

    def drift_matrix(self, r: float = 0.0) -> np.ndarray:
        """Block matrix ``[[c, gamma], [b, beta]] - r I``."""
        A = np.block([[self.c, self.gamma_block], [self.b, self.beta]])
        return A - r * np.eye(self.dim)

    def default_row(self) -> np.ndarray:
        """Row vector ``-a^T (c, gamma)``: the rate ``-dS/dt`` is its product with ``(Y, X)``."""
        return -np.concatenate([self.a @ self.c, self.a @ self.gamma_block])


@dataclass(frozen=True)
class LhcParams:
    """Diffusive linear hypercube model.

    Attributes
    ----------
    gamma : ndarray, shape (m,)
        Non-negative default loadings; the intensity is ``gamma^T x / y``.
    b : ndarray, shape (m,)
    beta : ndarray, shape (m, m)
    sigma : ndarray, shape (m,)
    """

    gamma: np.ndarray
    b: np.ndarray
    beta: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        gamma = check_vector(self.gamma, "gamma")
        m = gamma.shape[0]
        b = check_vector(self.b, "b", m)
        beta = check_finite_array(self.beta, "beta")
        if beta.size != m * m:
            raise InvalidInputError(f"beta must be {m}x{m}")
        sigma = check_vector(self.sigma, "sigma", m)
        if np.any(gamma < 0):
            raise InvalidInputError("gamma must be non-negative")
        if np.any(sigma < 0):
            raise InvalidInputError("sigma must be non-negative")
        for name, val in (("gamma", gamma), ("b", b), ("beta", beta.reshape(m, m)), ("sigma", sigma)):
            object.__setattr__(self, name, _freeze(val))

    @property
    def m(self) -> int:
        return self.gamma.shape[0]

    def to_linear(self) -> LinearModel:
        """Embed as a :class:`LinearModel` with ``n = 1``, ``c = 0``, ``gamma_block = -gamma^T``."""
        return LinearModel(
            c=np.zeros((1, 1)),
            gamma_block=-self.gamma.reshape(1, -1),
            b=self.b.reshape(-1, 1),
            beta=self.beta,
            a=np.ones(1),
        )

    def drift_matrix(self, r: float = 0.0) -> np.ndarray:
        return self.to_linear().drift_matrix(r)

    def with_sigma(self, sigma) -> "LhcParams":
        return LhcParams(self.gamma, self.b, self.beta, sigma)


@dataclass(frozen=True)
class LhccParams:
    """Cascade parametrisation of the LHC model.

    The embedded drift has ``gamma = gamma1 e_1``, ``beta_ii = -kappa_i``,
    ``beta_{i,i+1} = kappa_i theta_i`` and ``b_m = kappa_m theta_m``.
    Admissibility reduces to ``theta_i <= 1 - gamma1 / kappa_i``; the
    constructor does not enforce it so that infeasible candidates can be
    scored by penalty terms.  Use :meth:`check` or :func:`lhcc_to_lhc`.
    """

    gamma1: float
    kappa: np.ndarray
    theta: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        g1 = check_scalar(self.gamma1, "gamma1", lo=0.0)
        kappa = check_vector(self.kappa, "kappa")
        m = kappa.shape[0]
        theta = check_vector(self.theta, "theta", m)
        sigma = check_vector(self.sigma, "sigma", m)
        if np.any(kappa <= 0):
            raise InvalidInputError("kappa must be positive")
        if np.any(theta < 0):
            raise InvalidInputError("theta must be non-negative")
        if np.any(sigma < 0):
            raise InvalidInputError("sigma must be non-negative")
        object.__setattr__(self, "gamma1", g1)
        for name, val in (("kappa", kappa), ("theta", theta), ("sigma", sigma)):
            object.__setattr__(self, name, _freeze(val))

    @property
    def m(self) -> int:
        return self.kappa.shape[0]

    def gap(self) -> np.ndarray:
        """Slack ``1 - gamma1/kappa_i - theta_i`` of the cascade constraint."""
        return 1.0 - self.gamma1 / self.kappa - self.theta

    def check(self) -> None:
        """Raise :class:`ConstraintError` naming the first violated dimension."""
        g = self.gap()
        bad = np.flatnonzero(g < -CASCADE_TOL)
        if bad.size:
            i = int(bad[0])
            raise ConstraintError(
                f"cascade constraint violated at i={i + 1}: theta={self.theta[i]} > "
                f"1 - gamma1/kappa = {1.0 - self.gamma1 / self.kappa[i]} (gap {g[i]:.3e})"
            )

    def binding(self, tol: float = 1e-6) -> np.ndarray:
        """Boolean mask of dimensions where the cascade constraint binds within ``tol``."""
        return np.abs(self.gap()) <= tol


@dataclass(frozen=True)
class State:
    """A point ``(y, x)`` of the hyperpyramid ``E``."""

    y: float
    x: np.ndarray
    tol: float = field(default=1e-12, repr=False, compare=False)

    def __post_init__(self):
        y = check_scalar(self.y, "y")
        x = check_vector(self.x, "x")
        tol = self.tol
        if not (0.0 < y <= 1.0 + tol):
            raise DomainError(f"y={y} outside (0, 1]")
        if np.any(x < -tol) or np.any(x > y + tol):
            raise DomainError(f"x={x} outside [0, y]^m with y={y}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", _freeze(np.clip(x, 0.0, y)))

    @property
    def m(self) -> int:
        return self.x.shape[0]

    @property
    def vector(self) -> np.ndarray:
        """Stacked state ``(y, x_1, ..., x_m)``."""
        return np.concatenate([[self.y], self.x])

    @classmethod
    def from_vector(cls, v) -> "State":
        v = check_vector(v, "state")
        return cls(v[0], v[1:])


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :func:`validate_lhc`.

    ``slack_zero[i] = b_i - sum_{j != i} beta_ij^-`` keeps ``x_i >= 0`` and
    ``slack_upper[i] = -(gamma_i + beta_ii + b_i + sum_{j != i} (gamma_j + beta_ij)^+)``
    keeps ``x_i <= y``.  The model is admissible when both are non-negative.
    The flags report whether each slack also exceeds ``sigma_i^2 / 2``, in
    which case the corresponding face is never reached.
    """

    valid: bool
    slack_zero: np.ndarray
    slack_upper: np.ndarray
    zero_unattainable: np.ndarray
    upper_unattainable: np.ndarray
    tol: float = 0.0

    def as_dict(self) -> dict:
        return {
            "valid": bool(self.valid),
            "slack_zero": self.slack_zero.tolist(),
            "slack_upper": self.slack_upper.tolist(),
            "zero_unattainable": self.zero_unattainable.tolist(),
            "upper_unattainable": self.upper_unattainable.tolist(),
        }


def _slacks(gamma, b, beta):
    m = gamma.shape[0]
    off = ~np.eye(m, dtype=bool)
    neg = np.where(off, np.maximum(-beta, 0.0), 0.0)
    s0 = b - neg.sum(axis=1)
    pos = np.where(off, np.maximum(gamma[None, :] + beta, 0.0), 0.0)
    s1 = -(gamma + np.diag(beta) + b + pos.sum(axis=1))
    return s0, s1


def validate_lhc(p: LhcParams, tol: float = CASCADE_TOL) -> ValidationReport:
    """Check the inward-drift conditions that keep the LHC model in ``E``.

    Parameters
    ----------
    p : LhcParams
    tol : float
        Slacks down to ``-tol`` still count as satisfied; the default absorbs
        rounding in parameters mapped from the cascade form.
    """
    s0, s1 = _slacks(p.gamma, p.b, p.beta)
    half = 0.5 * p.sigma**2
    return ValidationReport(
        valid=bool(np.all(s0 >= -tol) and np.all(s1 >= -tol)),
        slack_zero=s0,
        slack_upper=s1,
        zero_unattainable=s0 >= half,
        upper_unattainable=s1 >= half,
        tol=tol,
    )


def lhcc_to_lhc(p: LhccParams, check: bool = True) -> LhcParams:
    """Map cascade parameters to the embedded LHC drift.

    Raises
    ------
    ConstraintError
        If ``check`` is true and some ``theta_i > 1 - gamma1/kappa_i``
        beyond :data:`CASCADE_TOL`.
    """
    if check:
        p.check()
    m = p.m
    gamma = np.zeros(m)
    gamma[0] = p.gamma1
    beta = -np.diag(p.kappa)
    for i in range(m - 1):
        beta[i, i + 1] = p.kappa[i] * p.theta[i]
    b = np.zeros(m)
    b[-1] = p.kappa[-1] * p.theta[-1]
    return LhcParams(gamma, b, beta, p.sigma)


def _as_linear(model) -> LinearModel:
    if isinstance(model, LinearModel):
        return model
    if isinstance(model, LhcParams):
        return model.to_linear()
    if isinstance(model, LhccParams):
        return lhcc_to_lhc(model, check=False).to_linear()
    raise InvalidInputError(f"unsupported model type {type(model).__name__}")


def drift_matrix(model, r: float = 0.0) -> np.ndarray:
    """Drift matrix ``A - r I`` of any supported model type."""
    return _as_linear(model).drift_matrix(check_scalar(r, "r"))


def intensity(model, s) -> float:
    """Default intensity ``-a^T (c y + gamma x) / a^T y`` at state ``s``.

    ``s`` is a :class:`State` or a stacked vector ``(y..., x...)``.
    """
    lin = _as_linear(model)
    v = s.vector if isinstance(s, State) else check_vector(s, "state", lin.dim)
    surv = float(lin.a @ v[: lin.n])
    if surv <= 0:
        raise DomainError("survival level a^T y is zero")
    return float(lin.default_row() @ v) / surv


def canonicalize(p: LhcParams, L) -> LhcParams:
    """Rescale factors by ``X' = X / L``.

    The rescaled model has ``gamma' = L * gamma``, ``b' = b / L`` and
    ``beta' = diag(1/L) beta diag(L)``; the volatilities are unchanged.
    Prices from ``(p, x)`` and ``(canonicalize(p, L), x / L)`` coincide.
    """
    L = check_vector(L, "L", p.m)
    if np.any(L <= 0):
        raise InvalidInputError("L must be positive")
    beta = p.beta * L[None, :] / L[:, None]
    return LhcParams(p.gamma * L, p.b / L, beta, p.sigma)


def mpr_lambda(p: LhcParams, b_P, beta_P, s: State) -> np.ndarray:
    """Market price of risk turning the drift into ``b_P y + beta_P x``.

    Components on a face of ``E`` are evaluated through their cancelled
    form when the numerator vanishes on that face; otherwise a
    :class:`DomainError` is raised.
    """
    m = p.m
    b_P = check_vector(b_P, "b_P", m)
    beta_P = check_finite_array(beta_P, "beta_P").reshape(m, m)
    y, x = s.y, s.x
    db = b_P - p.b
    dB = beta_P - p.beta
    num = db * y + dB @ x
    out = np.empty(m)
    for i in range(m):
        if p.sigma[i] <= 0:
            if num[i] == 0:
                out[i] = 0.0
                continue
            raise DomainError(f"sigma_{i + 1} = 0 with non-zero drift change")
        off = np.delete(dB[i], i)
        same_off = np.all(off == 0)
        if 0.0 < x[i] < y:
            out[i] = num[i] / (p.sigma[i] * np.sqrt(x[i] * (y - x[i])))
        elif same_off and db[i] == 0:
            # numerator dB_ii x_i vanishes like x_i
            out[i] = dB[i, i] * np.sqrt(x[i]) / (p.sigma[i] * np.sqrt(y - x[i])) if x[i] < y else np.nan
        elif same_off and db[i] == -dB[i, i]:
            # numerator -dB_ii (y - x_i) vanishes like y - x_i
            out[i] = -dB[i, i] * np.sqrt(y - x[i]) / (p.sigma[i] * np.sqrt(x[i])) if x[i] > 0 else np.nan
        else:
            out[i] = np.nan
        if not np.isfinite(out[i]):
            raise DomainError(f"market price of risk undefined on the boundary for i={i + 1}")
    return out


@dataclass(frozen=True)
class MprReport:
    """Sufficient conditions for an equivalent change of measure."""

    valid: bool
    case: tuple
    reasons: tuple


def validate_mpr(p: LhcParams, b_P, beta_P, s: State) -> MprReport:
    """Check the boundary non-attainment hypotheses for both drift specifications.

    Each dimension is classified as ``"generic"`` (both faces must be
    unattainable and ``x_i`` interior), ``"zero"`` (the drift change scales
    with ``x_i``, so the face ``x_i = 0`` may be reached) or ``"upper"`` (the
    change scales with ``y - x_i``).
    """
    m = p.m
    b_P = check_vector(b_P, "b_P", m)
    beta_P = check_finite_array(beta_P, "beta_P").reshape(m, m)
    q = validate_lhc(p)
    pp = validate_lhc(LhcParams(p.gamma, b_P, beta_P, p.sigma))
    db = b_P - p.b
    dB = beta_P - p.beta
    cases, reasons = [], []
    for i in range(m):
        same_off = np.all(np.delete(dB[i], i) == 0)
        xi, y = s.x[i], s.y
        if same_off and db[i] == 0:
            cases.append("zero")
            ok = q.valid and pp.valid and q.upper_unattainable[i] and pp.upper_unattainable[i] and 0 <= xi < y
        elif same_off and db[i] == -dB[i, i]:
            cases.append("upper")
            ok = q.valid and pp.valid and q.zero_unattainable[i] and pp.zero_unattainable[i] and 0 < xi <= y
        else:
            cases.append("generic")
            ok = (
                q.zero_unattainable[i] and q.upper_unattainable[i]
                and pp.zero_unattainable[i] and pp.upper_unattainable[i] and 0 < xi < y
            )
        if not ok:
            reasons.append(f"dimension {i + 1} ({cases[-1]}) fails its non-attainment hypotheses")
    return MprReport(valid=not reasons, case=tuple(cases), reasons=tuple(reasons))


def one_factor_from_roots(gamma: float, l1: float, l2: float, sigma: float) -> LhcParams:
    """One-factor LHC model from the roots of its drift polynomial.

    The drift matrix ``[[0, -gamma], [b, beta]]`` has eigenvalues ``-l1`` and
    ``-l2`` when ``beta = -(l1 + l2)`` and ``b gamma = l1 l2``.
    """
    gamma = check_scalar(gamma, "gamma", lo=0.0)
    if gamma == 0 and l1 * l2 != 0:
        raise InvalidInputError("gamma = 0 requires a zero root")
    b = l1 * l2 / gamma if gamma > 0 else 0.0
    return LhcParams([gamma], [b], [[-(l1 + l2)]], [sigma])


def constant_intensity_model(gamma: float, sigma: float = 0.0) -> LhcParams:
    """One-factor model whose intensity stays at ``gamma`` when started from ``x = y``."""
    return one_factor_from_roots(gamma, 0.0, gamma, sigma)
