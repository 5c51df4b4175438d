"""Multi-name constructions, index spreads, default counts and tranches.

A portfolio stacks ``d`` independent LHC blocks ``(Y^j, X^j)``.  Firm
``i`` survives with ``S^i = a_i^T Y`` (linear construction) or
``S^i = prod_j (Y^j)^{alpha_ij}`` (polynomial construction).  Moments of
the polynomial construction factor over blocks, so no tensor basis is
ever assembled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np
from numpy.polynomial import Polynomial
from scipy.stats import binom

from ._validation import check_finite_array, check_recovery, check_scalar, check_vector
from .exceptions import DomainError, EmptyPortfolioError, InvalidInputError
from .linmat import exp_integral, expm
from .model import LhccParams, LhcParams, LinearModel, State, lhcc_to_lhc
from .moments import generator_matrix
from .pricing import TenorGrid, _gl, cds_legs, cds_legs_from_curve

__all__ = [
    "Portfolio",
    "CountDistribution",
    "RatesCreditModel",
    "stack_states",
    "cdis_legs",
    "cdis_spread",
    "default_count_distribution",
    "default_count_convolution",
    "default_count_homogeneous",
    "tranche_loss_polynomial",
    "tranche_legs_homogeneous",
    "tranche_price_homogeneous",
    "rates_credit_state",
    "rates_credit_bond",
    "rates_credit_default_claim",
    "shadow_intensities",
    "firm_intensity",
    "TRANCHE_MAX_DEGREE",
]

#: Default cap on ``N - N_t`` for homogeneous tranche pricing.
TRANCHE_MAX_DEGREE = 15


def _as_lhc(p) -> LhcParams:
    if isinstance(p, LhccParams):
        return lhcc_to_lhc(p, check=False)
    if isinstance(p, LhcParams):
        return p
    raise InvalidInputError(f"expected LHC parameters, got {type(p).__name__}")


@dataclass(frozen=True)
class Portfolio:
    """Reference portfolio on independent LHC blocks.

    Attributes
    ----------
    blocks : tuple of LhcParams
    firms : ndarray, shape (N, d)
        Weight rows ``a_i`` (linear construction) or integer exponent rows
        ``alpha_i`` (polynomial construction).
    recovery : float
    construction : {"linear", "polynomial"}
    """

    blocks: tuple
    firms: np.ndarray
    recovery: float = 0.4
    construction: str = "linear"

    def __post_init__(self):
        blocks = tuple(_as_lhc(b) for b in (self.blocks if isinstance(self.blocks, (list, tuple)) else [self.blocks]))
        if not blocks:
            raise InvalidInputError("a portfolio needs at least one block")
        F = check_finite_array(self.firms, "firms")
        F = np.atleast_2d(F)
        if F.shape[1] != len(blocks):
            raise InvalidInputError(f"firm rows need {len(blocks)} entries, got {F.shape[1]}")
        if F.shape[0] == 0:
            raise InvalidInputError("a portfolio needs at least one firm")
        if self.construction == "linear":
            if np.any(F < 0) or np.any(np.abs(F.sum(axis=1) - 1.0) > 1e-12):
                raise InvalidInputError("linear weights must be non-negative and sum to one")
        elif self.construction == "polynomial":
            if np.any(F < 0) or np.any(F != np.round(F)):
                raise InvalidInputError("exponents must be non-negative integers")
            if np.any(F.sum(axis=1) == 0):
                raise InvalidInputError("a zero exponent row gives a firm that never defaults")
        else:
            raise InvalidInputError(f"unknown construction {self.construction!r}")
        F = np.array(F, dtype=float)
        F.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "firms", F)
        object.__setattr__(self, "recovery", check_recovery(self.recovery))

    @property
    def n_firms(self) -> int:
        return self.firms.shape[0]

    @property
    def d(self) -> int:
        return len(self.blocks)

    @property
    def factor_sizes(self) -> tuple:
        return tuple(b.m for b in self.blocks)

    def is_homogeneous(self) -> bool:
        return bool(np.all(self.firms == self.firms[0]))

    def stacked_model(self, firm: int | None = None) -> LinearModel:
        """Linear model on ``(Y^1..Y^d, X^1..X^d)`` with the weights of ``firm``.

        With ``firm=None`` the first unit vector is used, which is handy when
        only the drift matrix matters.
        """
        d = self.d
        ms = self.factor_sizes
        m = sum(ms)
        gam = np.zeros((d, m))
        b = np.zeros((m, d))
        beta = np.zeros((m, m))
        off = 0
        for j, blk in enumerate(self.blocks):
            sl = slice(off, off + blk.m)
            gam[j, sl] = -blk.gamma
            b[sl, j] = blk.b
            beta[sl, sl] = blk.beta
            off += blk.m
        if firm is None:
            a = np.eye(d)[0]
        else:
            if self.construction != "linear":
                raise InvalidInputError("stacked linear models exist only for the linear construction")
            a = self.firms[firm]
        return LinearModel(np.zeros((d, d)), gam, b, beta, a)


@dataclass(frozen=True)
class CountDistribution:
    """Distribution of the number of defaults at a horizon."""

    horizon: float
    probabilities: np.ndarray

    def __post_init__(self):
        p = np.array(self.probabilities, dtype=float)
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)

    @property
    def n_firms(self) -> int:
        return self.probabilities.shape[0] - 1

    def mean(self) -> float:
        return float(np.arange(self.probabilities.shape[0]) @ self.probabilities)


def stack_states(portfolio: Portfolio, states) -> np.ndarray:
    """Stacked vector ``(y_1..y_d, x^1..x^d)`` from one :class:`State` per block."""
    states = list(states) if isinstance(states, (list, tuple)) else [states]
    if len(states) != portfolio.d:
        raise InvalidInputError(f"expected {portfolio.d} block states, got {len(states)}")
    ys, xs = [], []
    for blk, s in zip(portfolio.blocks, states):
        if not isinstance(s, State):
            s = State.from_vector(s)
        if s.m != blk.m:
            raise InvalidInputError("block state has the wrong number of factors")
        ys.append(s.y)
        xs.append(s.x)
    return np.concatenate([np.asarray(ys), *xs])


def _alive(portfolio: Portfolio, alive) -> np.ndarray:
    if alive is None:
        return np.ones(portfolio.n_firms, dtype=bool)
    a = np.asarray(alive, dtype=bool).reshape(-1)
    if a.shape[0] != portfolio.n_firms:
        raise InvalidInputError("alive flags must have one entry per firm")
    return a


def _block_survival_moments(portfolio: Portfolio, states, t: float, us: np.ndarray) -> list:
    """``E[(Y^j_u)^k] / (Y^j_t)^k`` for every block, ``k <= max exponent``, at times ``us``."""
    out = []
    for j, (blk, s) in enumerate(zip(portfolio.blocks, states)):
        kmax = int(portfolio.firms[:, j].max())
        tab = np.ones((us.shape[0], kmax + 1))
        if kmax > 0:
            op = generator_matrix(blk, kmax)
            idx = [op.index[(k,) + (0,) * blk.m] for k in range(kmax + 1)]
            for q, u in enumerate(us):
                mv = op.moment_vector(s, u - t)
                tab[q] = mv[idx] / s.y ** np.arange(kmax + 1)
        out.append(tab)
    return out


def cdis_legs(portfolio: Portfolio, states, alive, t: float, grid: TenorGrid, r: float, nodes: int = 32):
    """Per-firm CDS protection and premium values, scaled by ``1 / S^i_t``.

    Returns
    -------
    prot, prem : ndarray, shape (N,)
        Zero for firms that have already defaulted.
    """
    states = [s if isinstance(s, State) else State.from_vector(s) for s in (states if isinstance(states, (list, tuple)) else [states])]
    v = stack_states(portfolio, states)
    alive = _alive(portfolio, alive)
    delta = portfolio.recovery
    N = portfolio.n_firms
    prot = np.zeros(N)
    prem = np.zeros(N)
    if portfolio.construction == "linear":
        d = portfolio.d
        # leg vectors are linear in the weights, so d unit-weight evaluations suffice
        unit = []
        for j in range(d):
            lin = portfolio.stacked_model()
            lin = LinearModel(lin.c, lin.gamma_block, lin.b, lin.beta, np.eye(d)[j])
            legs = cds_legs(lin, t, grid, r, delta)
            unit.append((legs.psi_prot @ v, legs.psi_prem @ v))
        unit = np.asarray(unit)
        y = v[:d]
        for i in range(N):
            if not alive[i]:
                continue
            a = portfolio.firms[i]
            surv = float(a @ y)
            prot[i] = float(a @ unit[:, 0]) / surv
            prem[i] = float(a @ unit[:, 1]) / surv
        return prot, prem
    # polynomial construction: survival curves from per-block moments
    dates = grid.all_dates
    us = [dates]
    for j in range(1, dates.shape[0]):
        us.append(_gl(dates[j - 1], dates[j], nodes)[0])
    allu = np.unique(np.concatenate(us))
    tabs = _block_survival_moments(portfolio, states, t, allu)
    for i in range(N):
        if not alive[i]:
            continue
        alpha = portfolio.firms[i].astype(int)
        G = np.ones(allu.shape[0])
        for j, tab in enumerate(tabs):
            G *= tab[:, alpha[j]]

        def survival(u, G=G):
            return np.interp(np.asarray(u, dtype=float), allu, G)

        prot[i], prem[i] = cds_legs_from_curve(survival, t, grid, r, delta, nodes=nodes)
    return prot, prem


def cdis_spread(portfolio: Portfolio, states, alive, t: float, grid: TenorGrid, r: float) -> float:
    """Par spread of a CDS index: summed protection over summed premium values."""
    alive = _alive(portfolio, alive)
    if not alive.any():
        raise EmptyPortfolioError("every firm in the portfolio has defaulted")
    prot, prem = cdis_legs(portfolio, states, alive, t, grid, r)
    return float(prot.sum() / prem.sum())


# ---------------------------------------------------------------- default counts

def _check_ratios(ratios, alive):
    q = check_vector(ratios, "ratios")
    if np.any(q < 0.0) or np.any(q > 1.0):
        raise InvalidInputError("survival ratios must lie in [0, 1]")
    if alive is None:
        alive = np.ones(q.shape[0], dtype=bool)
    alive = np.asarray(alive, dtype=bool).reshape(-1)
    if alive.shape[0] != q.shape[0]:
        raise InvalidInputError("alive flags must match the ratios")
    return np.where(alive, q, 0.0)


def default_count_distribution(ratios, alive=None, horizon: float = float("nan")) -> CountDistribution:
    """Distribution of the default count given survival ratios ``S^i_u / S^i_t``.

    Uses the discrete Fourier transform of the probability generating
    function: with ``zeta = exp(2 i pi / (N + 1))`` and
    ``phi(j) = prod_i (zeta^j + (1 - zeta^j) q_i)``,
    ``P(N_u = n) = sum_j zeta^(-n j) phi(j) / (N + 1)``.  Firms flagged as
    defaulted count as certain defaults.
    """
    q = _check_ratios(ratios, alive)
    N = q.shape[0]
    zeta = np.exp(2j * np.pi / (N + 1))
    j = np.arange(N + 1)
    zj = zeta**j
    phi = np.prod(zj[:, None] + (1.0 - zj[:, None]) * q[None, :], axis=1)
    # phi(j) = E[zeta^(j N_u)], inverted with the conjugate kernel
    P = (zeta ** (-np.outer(j, j))) @ phi / (N + 1)
    if np.max(np.abs(P.imag)) > 1e-10:
        raise DomainError("imaginary residue in the default count transform")
    P = P.real
    P[np.abs(P) < 1e-15] = 0.0
    return CountDistribution(horizon, np.clip(P, 0.0, None))


def default_count_convolution(ratios, alive=None) -> np.ndarray:
    """Default-count probabilities by convolving independent Bernoulli laws."""
    q = _check_ratios(ratios, alive)
    P = np.ones(1)
    for qi in q:
        P = np.convolve(P, [qi, 1.0 - qi])
    return P


def default_count_homogeneous(N: int, N_t: int, ratio: float) -> np.ndarray:
    """Binomial default-count law for identical firms: ``N_u - N_t ~ Bin(N - N_t, 1 - ratio)``."""
    ratio = check_scalar(ratio, "ratio", lo=0.0, hi=1.0)
    if not 0 <= N_t <= N:
        raise InvalidInputError("need 0 <= N_t <= N")
    P = np.zeros(N + 1)
    P[N_t:] = binom.pmf(np.arange(N - N_t + 1), N - N_t, 1.0 - ratio)
    return P


# ---------------------------------------------------------------- tranches

def tranche_loss_polynomial(N: int, N_t: int, n_a: int, n_d: int, delta: float, y_t: float) -> Polynomial:
    """Expected tranche loss as a polynomial ``g`` of the survival level ``y``.

    With ``p = y / y_t`` the survivors among the ``N - N_t`` live names are
    binomial, so ``E[T_u | Y_u = y] = (1 - delta)/N sum_k C(n,k) (1-p)^k p^(n-k)
    min((N_t + k - n_a)^+, n_d - n_a)``.
    """
    if not 0 <= n_a < n_d <= N:
        raise InvalidInputError("need 0 <= n_a < n_d <= N")
    if not 0 <= N_t <= N:
        raise InvalidInputError("need 0 <= N_t <= N")
    n = N - N_t
    p = Polynomial([0.0, 1.0 / y_t])
    q = 1.0 - p
    g = Polynomial([0.0])
    for k in range(n + 1):
        h = min(max(N_t + k - n_a, 0), n_d - n_a)
        if h:
            g = g + comb(n, k) * h * q**k * p ** (n - k)
    return g * ((1.0 - delta) / N)


def tranche_legs_homogeneous(
    p,
    s: State,
    t: float,
    grid: TenorGrid,
    n_a: int,
    n_d: int,
    delta: float,
    r: float,
    N: int,
    N_t: int = 0,
    max_degree: int = TRANCHE_MAX_DEGREE,
    prot_nodes: int = 64,
    prem_nodes: int = 32,
) -> tuple[float, float]:
    """Protection and premium legs of a tranche on identical LHC firms.

    The protection leg integrates ``e^{-r(u-t)} dE[T_u]/du`` with
    ``dE[T_u]/du = E[g'(Y_u) (-gamma^T X_u)]``; the premium leg integrates
    the outstanding notional ``K_d - K_a - E[T_u]`` over each coupon period
    and discounts it from the payment date.  Expectations use the moment
    operator of degree ``N - N_t``.
    """
    from .exceptions import CapacityError

    p = _as_lhc(p)
    delta = check_recovery(delta)
    if N - N_t > max_degree:
        raise CapacityError(f"tranche moment degree {N - N_t} exceeds the limit {max_degree}")
    if t > grid.t0:
        raise InvalidInputError("valuation time must not exceed the protection start")
    g = tranche_loss_polynomial(N, N_t, n_a, n_d, delta, s.y)
    gc = np.pad(g.coef, (0, max(0, N - N_t + 1 - g.coef.shape[0])))
    dg = g.deriv().coef
    deg = max(1, N - N_t)
    op = generator_matrix(p, deg)
    m = p.m
    vg = np.zeros(op.size)
    for k, c in enumerate(gc):
        if c != 0.0:
            vg[op.index[(k,) + (0,) * m]] += c
    vd = np.zeros(op.size)
    for k, c in enumerate(dg):
        if c == 0.0 or k + 1 > deg:
            continue
        for i in range(m):
            e = [k] + [0] * m
            e[1 + i] = 1
            vd[op.index[tuple(e)]] += -p.gamma[i] * c
    dates = grid.all_dates
    lgd = (1.0 - delta) / N
    width = (n_d - n_a) * lgd
    # protection: int_{t0}^{tM} e^{-r(u-t)} dE[T_u]
    u, w = _gl(dates[0], dates[-1], prot_nodes)
    rate = np.array([op.moment_vector(s, ui - t) @ vd for ui in u])
    prot = float(np.sum(w * np.exp(-r * (u - t)) * rate))
    prem = 0.0
    for j in range(1, dates.shape[0]):
        u, w = _gl(dates[j - 1], dates[j], prem_nodes)
        ET = np.array([op.moment_vector(s, ui - t) @ vg for ui in u])
        prem += np.exp(-r * (dates[j] - t)) * float(np.sum(w * (width - ET)))
    return prot, prem


def tranche_price_homogeneous(
    p, s: State, t: float, grid: TenorGrid, n_a: int, n_d: int, delta: float, k: float, r: float, N: int, N_t: int = 0,
) -> float:
    """Tranche value ``protection - k premium`` (``k`` a decimal spread)."""
    prot, prem = tranche_legs_homogeneous(p, s, t, grid, n_a, n_d, delta, r, N, N_t)
    return prot - k * prem


# ---------------------------------------------------------------- stochastic rates

_RC_BASIS = ((2, 0, 0, 0), (1, 0, 1, 0), (1, 1, 0, 0), (1, 0, 0, 1), (0, 1, 1, 0), (0, 2, 0, 0), (0, 1, 0, 1))
# exponents on (y1, x1, y2, x2): y1^2, y1 y2 | y1 x1, y1 x2, x1 y2, x1^2, x1 x2


def _rc_generator(p1: LhcParams, p2: LhcParams) -> np.ndarray:
    """Drift matrix of the seven products spanned by ``D S`` under two independent blocks."""
    idx = {e: k for k, e in enumerate(_RC_BASIS)}
    g = (p1.gamma[0], p2.gamma[0])
    b = (p1.b[0], p2.b[0])
    be = (p1.beta[0, 0], p2.beta[0, 0])
    s2 = (p1.sigma[0] ** 2, p2.sigma[0] ** 2)
    A = np.zeros((7, 7))
    for row, e in enumerate(_RC_BASIS):
        terms: dict = {}

        def add(ex, v):
            terms[tuple(ex)] = terms.get(tuple(ex), 0.0) + v

        for j in range(2):
            ky, kx = e[2 * j], e[2 * j + 1]
            if ky:  # d y = -gamma x dt
                ex = list(e)
                ex[2 * j] -= 1
                ex[2 * j + 1] += 1
                add(ex, -ky * g[j])
            if kx:  # d x = (b y + beta x) dt + sigma sqrt(x (y - x)) dW
                ex = list(e)
                ex[2 * j + 1] -= 1
                ex[2 * j] += 1
                add(ex, kx * b[j] + 0.5 * s2[j] * kx * (kx - 1))
                add(e, kx * be[j] - 0.5 * s2[j] * kx * (kx - 1))
        for ex, v in terms.items():
            if v == 0.0:
                continue
            if ex not in idx:
                raise DomainError(f"product basis not closed under the generator: {ex}")
            A[row, idx[ex]] += v
    return A


@dataclass(frozen=True)
class RatesCreditModel:
    """Discount ``D = Y^1`` and survival ``S = nu Y^1 + (1 - nu) Y^2`` on two one-factor blocks.

    ``drift`` is the matrix of the products ``(y1^2, y1 y2, y1 x1, y1 x2,
    x1 y2, x1^2, x1 x2)``, derived from the generator.
    """

    rates: LhcParams
    credit: LhcParams
    nu: float
    drift: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        p1, p2 = _as_lhc(self.rates), _as_lhc(self.credit)
        if p1.m != 1 or p2.m != 1:
            raise InvalidInputError("both blocks must have a single factor")
        nu = check_scalar(self.nu, "nu", lo=0.0, hi=1.0)
        A = _rc_generator(p1, p2)
        A.setflags(write=False)
        object.__setattr__(self, "rates", p1)
        object.__setattr__(self, "credit", p2)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "drift", A)

    @property
    def a_z(self) -> np.ndarray:
        return np.array([self.nu, 1.0 - self.nu, 0, 0, 0, 0, 0])

    @property
    def a_d(self) -> np.ndarray:
        g1, g2 = self.rates.gamma[0], self.credit.gamma[0]
        return np.array([0, 0, self.nu * g1, (1.0 - self.nu) * g2, 0, 0, 0])


def rates_credit_state(s1: State, s2: State) -> np.ndarray:
    """Extended state of products from the two block states."""
    y1, x1, y2, x2 = s1.y, s1.x[0], s2.y, s2.x[0]
    return np.array([y1 * y1, y1 * y2, y1 * x1, y1 * x2, x1 * y2, x1 * x1, x1 * x2])


def rates_credit_bond(model: RatesCreditModel, state7, t: float, tM: float) -> float:
    """Zero-recovery bond ``E[D_T S_T] / (D_t S_t)``."""
    v = check_vector(state7, "state7", 7)
    h = check_scalar(tM - t, "tM - t", lo=0.0)
    psi = model.a_z @ expm(model.drift * h)
    return float(psi @ v) / float(model.a_z @ v)


def rates_credit_default_claim(model: RatesCreditModel, state7, t: float, tM: float) -> float:
    """Unit paid at default within ``(t, tM]``, discounted with the stochastic rate."""
    v = check_vector(state7, "state7", 7)
    h = check_scalar(tM - t, "tM - t", lo=0.0)
    psi = model.a_d @ exp_integral(model.drift, h)
    return float(psi @ v) / float(model.a_z @ v)


# ---------------------------------------------------------------- intensities

def shadow_intensities(portfolio: Portfolio, states) -> np.ndarray:
    """Block intensities ``h^j = gamma^j . x^j / y^j``."""
    states = [s if isinstance(s, State) else State.from_vector(s) for s in (states if isinstance(states, (list, tuple)) else [states])]
    if len(states) != portfolio.d:
        raise InvalidInputError(f"expected {portfolio.d} block states")
    return np.array([float(b.gamma @ s.x) / s.y for b, s in zip(portfolio.blocks, states)])


def firm_weights_at(portfolio: Portfolio, firm: int, states) -> np.ndarray:
    """Random weights ``w_j = a_j Y^j / S`` of the linear construction."""
    states = [s if isinstance(s, State) else State.from_vector(s) for s in (states if isinstance(states, (list, tuple)) else [states])]
    y = np.array([s.y for s in states])
    a = portfolio.firms[firm]
    return a * y / float(a @ y)


def firm_intensity(portfolio: Portfolio, firm: int, states) -> float:
    """Default intensity of one firm from the shadow intensities."""
    h = shadow_intensities(portfolio, states)
    if portfolio.construction == "polynomial":
        return float(portfolio.firms[firm] @ h)
    return float(firm_weights_at(portfolio, firm, states) @ h)
