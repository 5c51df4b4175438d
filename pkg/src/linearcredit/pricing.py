"""Closed-form single-name prices in linear credit models.

Each price is a linear form ``psi^T (Y_t, X_t)`` divided by the survival
level ``a^T Y_t``.  With ``A_* = A - r I`` and ``h = tM - t``:

* zero-recovery bond: ``psi_Z = (a, 0)^T e^{A_* h}``,
* unit payment at default: ``psi_D = q^T int_0^h e^{A_* s} ds``,
* payment of ``tau`` at default: ``psi_D* = q^T int_t^{tM} s e^{A_*(s - t)} ds``,

where ``q = -a^T (c, gamma)`` is the row giving the rate of decrease of the
survival process.  CDS legs are finite combinations of these vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from ._validation import check_horizon, check_recovery, check_scalar, check_vector
from .exceptions import DegenerateError, DomainError, InvalidInputError
from .linmat import exp_integral, exp_integral_weighted, exp_integrals, expm
from .model import LhccParams, LhcParams, LinearModel, State, _as_linear, lhcc_to_lhc

__all__ = [
    "BP",
    "PricingVector",
    "TenorGrid",
    "CdsLegs",
    "psi_z",
    "psi_d",
    "psi_dstar",
    "bond_zero",
    "bond_recovery_maturity",
    "bond_recovery_default",
    "contingent_default",
    "cds_legs",
    "cds_spread",
    "cds_legs_from_curve",
    "ucva",
    "gauss_legendre",
    "state_vector",
]

#: One basis point.
BP = 1e-4


def state_vector(model, s) -> np.ndarray:
    """Stacked ``(y..., x...)`` for a :class:`State` or a raw vector."""
    lin = _as_linear(model)
    if isinstance(s, State):
        v = s.vector
    else:
        v = check_vector(s, "state")
    if v.shape[0] != lin.dim:
        raise InvalidInputError(f"state has length {v.shape[0]}, model needs {lin.dim}")
    return v


@dataclass(frozen=True)
class PricingVector:
    """Linear form ``psi`` such that the price is ``psi^T (Y_t, X_t) / a^T Y_t``."""

    psi: np.ndarray
    t: float
    tM: float
    kind: str
    a: np.ndarray

    def value(self, s) -> float:
        """Undivided value ``psi^T (y, x)``."""
        v = s.vector if isinstance(s, State) else np.asarray(s, dtype=float)
        return float(self.psi @ v)

    def price(self, s) -> float:
        """Pre-default price ``psi^T (y, x) / a^T y``."""
        v = s.vector if isinstance(s, State) else np.asarray(s, dtype=float)
        surv = float(self.a @ v[: self.a.shape[0]])
        if surv <= 0:
            raise DomainError("survival level is zero")
        return float(self.psi @ v) / surv


@dataclass(frozen=True)
class TenorGrid:
    """Premium schedule ``t0 < t1 < ... < tM`` in year fractions."""

    t0: float
    dates: np.ndarray

    def __post_init__(self):
        t0 = check_scalar(self.t0, "t0")
        d = check_vector(self.dates, "dates")
        if d.size == 0:
            raise InvalidInputError("tenor grid needs at least one payment date")
        full = np.concatenate([[t0], d])
        if np.any(np.diff(full) <= 0):
            raise InvalidInputError("tenor dates must be strictly increasing after t0")
        object.__setattr__(self, "t0", t0)
        d = d.copy()
        d.setflags(write=False)
        object.__setattr__(self, "dates", d)

    @classmethod
    def regular(cls, t0: float, tM: float, frequency: int = 4) -> "TenorGrid":
        """Dates every ``1/frequency`` years ending at ``tM``; a short first period absorbs any remainder."""
        t0, tM = check_horizon(t0, tM)
        if tM == t0:
            raise InvalidInputError("empty tenor interval")
        if frequency <= 0:
            raise InvalidInputError("frequency must be positive")
        n = int(np.floor((tM - t0) * frequency + 1e-9)) + 1
        dates = tM - np.arange(n)[::-1] / frequency
        dates = dates[dates > t0 + 1e-12]
        if dates.size == 0 or dates[-1] != tM:
            dates = np.append(dates, tM)
        return cls(t0, dates)

    @property
    def tM(self) -> float:
        return float(self.dates[-1])

    @property
    def all_dates(self) -> np.ndarray:
        return np.concatenate([[self.t0], self.dates])

    @property
    def accruals(self) -> np.ndarray:
        return np.diff(self.all_dates)


@dataclass(frozen=True)
class CdsLegs:
    """Protection and premium leg vectors of a CDS."""

    psi_prot: np.ndarray
    psi_prem: np.ndarray
    recovery: float
    t: float
    grid: TenorGrid
    a: np.ndarray

    def psi_cds(self, k: float) -> np.ndarray:
        """Payer-side vector ``psi_prot - k psi_prem`` for a spread ``k`` (decimal)."""
        return self.psi_prot - k * self.psi_prem

    def values(self, s) -> tuple[float, float]:
        """Pre-default protection and premium (per unit spread) leg prices."""
        v = s.vector if isinstance(s, State) else np.asarray(s, dtype=float)
        surv = float(self.a @ v[: self.a.shape[0]])
        return float(self.psi_prot @ v) / surv, float(self.psi_prem @ v) / surv

    def spread(self, s) -> float:
        prot, prem = self.values(s)
        if prem <= 0:
            raise DegenerateError("premium leg value is not positive")
        return prot / prem


def _lin(model) -> LinearModel:
    if isinstance(model, LhccParams):
        return lhcc_to_lhc(model, check=False).to_linear()
    return _as_linear(model)


def psi_z(model, t: float, tM: float, r: float = 0.0) -> PricingVector:
    """Zero-recovery defaultable bond vector ``e^{-r h} (a, 0)^T e^{A h}``."""
    t, tM = check_horizon(t, tM)
    lin = _lin(model)
    A = lin.drift_matrix(r)
    row = np.concatenate([lin.a, np.zeros(lin.m)])
    psi = row @ expm(A * (tM - t))
    return PricingVector(psi, t, tM, "zero_bond", lin.a)


def psi_d(model, t: float, tM: float, r: float = 0.0, method: str = "auto") -> PricingVector:
    """Vector of the claim paying one at default if ``t < tau <= tM``."""
    t, tM = check_horizon(t, tM)
    lin = _lin(model)
    psi = lin.default_row() @ exp_integral(lin.drift_matrix(r), tM - t, method=method)
    return PricingVector(psi, t, tM, "default_claim", lin.a)


def psi_dstar(model, t: float, tM: float, r: float = 0.0, method: str = "auto") -> PricingVector:
    """Vector of the claim paying ``tau`` at default if ``t < tau <= tM``."""
    t, tM = check_horizon(t, tM)
    lin = _lin(model)
    psi = lin.default_row() @ exp_integral_weighted(lin.drift_matrix(r), t, tM, method=method)
    return PricingVector(psi, t, tM, "default_time_claim", lin.a)


def bond_zero(model, s, t: float, tM: float, r: float = 0.0) -> float:
    """Pre-default price of the zero-recovery bond."""
    return psi_z(model, t, tM, r).price(state_vector(model, s))


def bond_recovery_maturity(model, t: float, tM: float, r: float, delta: float) -> Callable:
    """Price function of a bond recovering ``delta`` at maturity.

    Returns a callable of the state: ``(1 - delta) B_Z + delta e^{-r (tM - t)}``.
    """
    delta = check_recovery(delta)
    pz = psi_z(model, t, tM, r)
    disc = np.exp(-r * (tM - t))

    def price(s) -> float:
        return (1.0 - delta) * pz.price(state_vector(model, s)) + delta * disc

    return price


def contingent_default(model, s, t: float, tM: float, r: float = 0.0) -> float:
    """Pre-default price of one unit paid at default within ``(t, tM]``."""
    return psi_d(model, t, tM, r).price(state_vector(model, s))


def bond_recovery_default(model, s, t: float, tM: float, r: float, delta: float) -> float:
    """Bond recovering ``delta`` at default: ``B_Z + delta C_D``."""
    delta = check_recovery(delta)
    v = state_vector(model, s)
    return psi_z(model, t, tM, r).price(v) + delta * psi_d(model, t, tM, r).price(v)


def cds_legs(model, t: float, grid: TenorGrid, r: float, delta: float, method: str = "auto") -> CdsLegs:
    """Protection and premium leg vectors for a CDS on ``grid``.

    The premium leg pays the coupon accrual ``t_j - t_{j-1}`` at each date
    the firm survives to, plus the accrued coupon ``tau - t_{j-1}`` at a
    default inside ``(t_{j-1}, t_j]``:

        psi_prem = sum_j (t_j - t_{j-1}) psi_Z(t_j)
                   + psi_D*(tM) - psi_D*(t0)
                   - t_{M-1} psi_D(tM) + sum_{j<M} (t_j - t_{j-1}) psi_D(t_j) + t0 psi_D(t0).
    """
    delta = check_recovery(delta)
    t = check_scalar(t, "t")
    if grid.t0 < t:
        raise InvalidInputError("valuation time must not exceed the protection start t0")
    lin = _lin(model)
    A = lin.drift_matrix(r)
    q = lin.default_row()
    arow = np.concatenate([lin.a, np.zeros(lin.m)])
    dates = grid.all_dates
    acc = grid.accruals
    M = acc.shape[0]
    pz = np.empty((M + 1, lin.dim))
    pd = np.empty((M + 1, lin.dim))
    pds = np.empty((M + 1, lin.dim))
    for j, tj in enumerate(dates):
        E, F1, W = exp_integrals(A, tj - t, t=t, method=method)
        pz[j] = arow @ E
        pd[j] = q @ F1
        pds[j] = q @ W
    prot = (1.0 - delta) * (pd[M] - pd[0])
    prem = acc @ pz[1:]
    prem = prem + pds[M] - pds[0]
    prem = prem - dates[M - 1] * pd[M] + acc[:-1] @ pd[1:M] + dates[0] * pd[0]
    return CdsLegs(prot, prem, delta, t, grid, lin.a)


def cds_spread(model, s, t: float, grid: TenorGrid, r: float, delta: float) -> float:
    """Par spread (decimal) ``psi_prot^T v / psi_prem^T v``."""
    legs = cds_legs(model, t, grid, r, delta)
    return legs.spread(state_vector(model, s))


@lru_cache(maxsize=32)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on ``[-1, 1]`` (read-only)."""
    x, w = np.polynomial.legendre.leggauss(int(n))
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _gl(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = gauss_legendre(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def cds_legs_from_curve(
    survival: Callable[[np.ndarray], np.ndarray],
    t: float,
    grid: TenorGrid,
    r: float,
    delta: float,
    nodes: int = 32,
) -> tuple[float, float]:
    """CDS leg prices from an expected survival curve ``G(u) = E[S_u] / S_t``.

    Integrates by parts so that only ``G`` itself is needed:
    ``int e^{-r(u-t)} (-dG) = [-e^{-r(u-t)} G] - r int e^{-r(u-t)} G du``,
    with Gauss-Legendre quadrature per coupon period.

    Returns
    -------
    protection, premium : float
        Leg prices per unit notional (premium per unit spread).
    """
    delta = check_recovery(delta)
    dates = grid.all_dates
    disc = lambda u: np.exp(-r * (u - t))
    Gd = np.asarray(survival(dates), dtype=float)
    prot = 0.0
    prem = 0.0
    for j in range(1, dates.shape[0]):
        lo, hi = dates[j - 1], dates[j]
        u, w = _gl(lo, hi, nodes)
        Gu = np.asarray(survival(u), dtype=float)
        # int_lo^hi e^{-r(u-t)} (-dG_u)
        cd = disc(lo) * Gd[j - 1] - disc(hi) * Gd[j] - r * np.sum(w * disc(u) * Gu)
        # int_lo^hi (u - lo) e^{-r(u-t)} (-dG_u), by parts
        cds = -(hi - lo) * disc(hi) * Gd[j] + np.sum(w * (1.0 - r * (u - lo)) * disc(u) * Gu)
        prot += cd
        prem += (hi - lo) * disc(hi) * Gd[j] + cds
    return (1.0 - delta) * prot, prem


def ucva(
    model,
    s,
    t: float,
    tM: float,
    r: float,
    exposure,
    nodes: int = 64,
    op=None,
) -> float:
    """Unilateral CVA ``E[e^{-r(tau - t)} f(tau, Y_tau, X_tau) 1{t < tau <= tM}] / S_t``.

    Parameters
    ----------
    model : LhcParams or LhccParams
    s : State
    exposure : dict or callable
        Polynomial (exponent tuple to coefficient) in ``(y, x)`` or a callable
        ``u -> polynomial`` for time-dependent exposures.  The loss given
        default is assumed to be folded into ``f``.
    nodes : int
        Gauss-Legendre nodes on ``[t, tM]``.
    op : MomentOperator, optional
        Reused if its degree suffices.
    """
    from .moments import generator_matrix, poly_degree, poly_linear, poly_mul

    if isinstance(model, LhccParams):
        model = lhcc_to_lhc(model, check=False)
    if not isinstance(model, LhcParams):
        raise InvalidInputError("ucva needs an LHC model")
    t, tM = check_horizon(t, tM)
    if tM == t:
        return 0.0
    m = model.m
    rate_poly = poly_linear(np.concatenate([[0.0], model.gamma]))
    fn = exposure if callable(exposure) else (lambda u, _p=exposure: _p)
    u, w = _gl(t, tM, nodes)
    polys = [poly_mul(fn(ui), rate_poly) for ui in u]
    deg = max(poly_degree(p) for p in polys)
    if op is None or op.degree < deg or op.params is not model:
        op = generator_matrix(model, max(deg, 1))
    sv = state_vector(model, s)
    total = 0.0
    for ui, wi, p in zip(u, w, polys):
        if not p:
            continue
        total += wi * np.exp(-r * (ui - t)) * float(op.moment_vector(sv, ui - t) @ op.to_vector(p))
    return total / sv[0]
