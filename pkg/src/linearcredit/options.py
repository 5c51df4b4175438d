"""CDS and CDS index options through polynomial payoff approximations.

A CDS option pays ``(Z)^+ / S_t`` discounted, where ``Z = psi_cds^T (Y, X)``
at expiry is a linear form of the state.  Approximating ``z -> z^+`` by an
orthonormal Legendre expansion on the range of ``Z`` turns the price into
a combination of moments ``E[Z^j]``, and the sup distance between payoff
and approximation bounds the pricing error.

For an index on identical firms the payoff is a function of the survival
level and one aggregate factor, approximated by tensor Chebyshev
interpolation and priced through bivariate moments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from math import comb

import numpy as np
from numpy.polynomial import chebyshev as C
from numpy.polynomial import legendre as L
from scipy.stats import binom

from ._validation import check_recovery, check_scalar
from .exceptions import CapacityError, DegenerateError, InvalidInputError
from .model import LhccParams, LhcParams, State, lhcc_to_lhc
from .moments import MomentOperator, OrthoMomentOperator, generator_matrix, ortho_generator, poly_linear, poly_mul
from .pricing import CdsLegs, TenorGrid, cds_legs

__all__ = [
    "PayoffSupport",
    "LegendreApprox",
    "OptionPrice",
    "ChebGrid2D",
    "cds_option_support",
    "legendre_payoff_coeffs",
    "z_moments",
    "cds_option_price",
    "cdis_option_payoff_homogeneous",
    "chebyshev_nodes",
    "cheb_fit_2d",
    "cdis_option_homogeneous",
    "cdis_option_exact",
    "SUP_GRID_1D",
    "SUP_GRID_2D",
    "EXACT_MAX_FIRMS",
    "CHEB_MAX_ORDER",
]

SUP_GRID_1D = 10_000
SUP_GRID_2D = 256
EXACT_MAX_FIRMS = 12
#: Largest tensor Chebyshev order; the bivariate generator then has degree 60.
CHEB_MAX_ORDER = 30


def _as_lhc(p) -> LhcParams:
    if isinstance(p, LhccParams):
        return lhcc_to_lhc(p, check=False)
    if isinstance(p, LhcParams):
        return p
    raise InvalidInputError(f"expected LHC parameters, got {type(p).__name__}")


@dataclass(frozen=True)
class PayoffSupport:
    """Interval ``[b_min, b_max]`` containing the values of ``Z``."""

    b_min: float
    b_max: float

    def __post_init__(self):
        if not self.b_min <= self.b_max:
            raise InvalidInputError("b_min must not exceed b_max")

    @property
    def center(self) -> float:
        return 0.5 * (self.b_min + self.b_max)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.b_max - self.b_min)

    def scaled(self, c: float) -> "PayoffSupport":
        return PayoffSupport(c * self.b_min, c * self.b_max)


def cds_option_support(legs: CdsLegs, k: float) -> PayoffSupport:
    """Range of ``psi_cds^T v`` over the unit box: sums of negative and positive parts."""
    psi = legs.psi_cds(k) if isinstance(legs, CdsLegs) else np.asarray(legs, dtype=float)
    return PayoffSupport(float(np.minimum(psi, 0.0).sum()), float(np.maximum(psi, 0.0).sum()))


@dataclass(frozen=True)
class LegendreApprox:
    """Truncated orthonormal Legendre expansion of ``scale * z^+``.

    Attributes
    ----------
    order : int
    coefficients : ndarray, shape (order + 1,)
        ``f_k = scale * int_0^{b_max} z Le_k(z) dz``.
    support : PayoffSupport
    scale : float
    sup_error : float
        Largest deviation from the payoff on a uniform validation grid.
    """

    order: int
    coefficients: np.ndarray
    support: PayoffSupport
    scale: float
    sup_error: float = field(default=float("nan"))

    @property
    def norms(self) -> np.ndarray:
        """``sqrt((2k + 1) / (2 sigma))`` turning ``P_k`` into ``Le_k``."""
        k = np.arange(self.order + 1)
        return np.sqrt((2 * k + 1) / (2.0 * self.support.half_width))

    def legendre_series(self) -> np.ndarray:
        """Coefficients on the standard ``P_k((z - mu) / sigma)``."""
        return self.coefficients * self.norms

    def __call__(self, z) -> np.ndarray:
        u = (np.asarray(z, dtype=float) - self.support.center) / self.support.half_width
        return L.legval(u, self.legendre_series())

    def payoff(self, z) -> np.ndarray:
        return self.scale * np.maximum(np.asarray(z, dtype=float), 0.0)


def _legendre_at(u: float, n: int) -> np.ndarray:
    """``P_0(u) .. P_n(u)`` by the three-term recurrence in extended precision."""
    P = np.zeros(n + 1, dtype=np.longdouble)
    u = np.longdouble(u)
    P[0] = 1
    if n >= 1:
        P[1] = u
    for k in range(1, n):
        P[k + 1] = ((2 * k + 1) * u * P[k] - k * P[k - 1]) / (k + 1)
    return P


def legendre_payoff_coeffs(support: PayoffSupport, n: int, scale: float = 1.0, grid: int = SUP_GRID_1D) -> LegendreApprox:
    """Exact Legendre coefficients of ``scale * z^+`` on ``support``.

    With ``z = mu + sigma u`` the coefficient is
    ``f_k = c_k sigma int_{u_0}^{1} (mu + sigma u) P_k(u) du`` where
    ``u_0 = max(-1, -mu / sigma)``.  The integrals follow from
    ``int P_k = (P_{k+1} - P_{k-1}) / (2k + 1)`` and
    ``u P_k = ((k + 1) P_{k+1} + k P_{k-1}) / (2k + 1)``.
    """
    n = int(n)
    if n < 0:
        raise InvalidInputError("order must be non-negative")
    if not support.b_max > support.b_min:
        raise DegenerateError("payoff support is degenerate (b_max = b_min)")
    mu, sig = support.center, support.half_width
    k = np.arange(n + 1)
    norms = np.sqrt((2 * k + 1) / (2.0 * sig))
    if support.b_max <= 0.0:
        coef = np.zeros(n + 1)
    else:
        u0 = max(-1.0, -mu / sig)
        P = _legendre_at(u0, n + 2)
        # I0[k] = int_{u0}^1 P_k, for k = 0..n+1
        I0 = np.empty(n + 2, dtype=np.longdouble)
        I0[0] = 1 - np.longdouble(u0)
        for j in range(1, n + 2):
            I0[j] = -(P[j + 1] - P[j - 1]) / (2 * j + 1)
        I1 = np.empty(n + 1, dtype=np.longdouble)
        I1[0] = (1 - np.longdouble(u0) ** 2) / 2
        for j in range(1, n + 1):
            I1[j] = ((j + 1) * I0[j + 1] + j * I0[j - 1]) / (2 * j + 1)
        coef = (np.longdouble(scale) * sig * (np.longdouble(mu) * I0[: n + 1] + np.longdouble(sig) * I1)).astype(float)
        coef = coef * norms
    approx = LegendreApprox(n, coef, support, float(scale))
    z = np.linspace(support.b_min, support.b_max, grid)
    err = float(np.max(np.abs(approx(z) - approx.payoff(z))))
    object.__setattr__(approx, "sup_error", err)
    return approx


def _moment_operator(p, n: int, op: MomentOperator | None) -> MomentOperator:
    if op is not None and op.degree >= n:
        return op
    return generator_matrix(p, n)


def z_moments(p, s: State, h: float, psi, n: int, op: MomentOperator | None = None) -> np.ndarray:
    """``E[Z^j]``, ``j = 0..n``, for ``Z = psi^T (Y_h, X_h)`` started at ``s``.

    The coefficients of ``Z^j`` on the monomial ``v^alpha`` follow the
    recursion ``c_alpha = sum_i 1{alpha_i >= 1} c_{alpha - e_i} psi_i``
    (the multinomial expansion), and each moment is ``sum_alpha c_alpha E[v^alpha]``.
    """
    p = _as_lhc(p)
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (p.m + 1,):
        raise InvalidInputError(f"psi must have length {p.m + 1}")
    op = _moment_operator(p, n, op)
    mv = op.moment_vector(s, h)
    nv = p.m + 1
    out = np.empty(n + 1)
    out[0] = 1.0
    coeffs = {(0,) * nv: 1.0}
    for j in range(1, n + 1):
        nxt: dict = {}
        for alpha, c in coeffs.items():
            for i in range(nv):
                if psi[i] == 0.0:
                    continue
                beta = list(alpha)
                beta[i] += 1
                beta = tuple(beta)
                nxt[beta] = nxt.get(beta, 0.0) + c * psi[i]
        coeffs = nxt
        out[j] = sum(c * mv[op.index[a]] for a, c in coeffs.items())
    return out


def _affine_coords(rows, offsets, nv: int) -> tuple[np.ndarray, np.ndarray]:
    """Affine map ``w = T (v - c)`` whose leading coordinates are ``rows @ v - offsets``.

    Remaining coordinates are ``2 v_j - 1`` for unit directions that keep
    ``T`` invertible, so every coordinate ranges over an interval of length
    about two on the state space.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    T = list(rows)
    d = list(np.atleast_1d(np.asarray(offsets, dtype=float)))
    for j in range(nv):
        if len(T) == nv:
            break
        cand = np.zeros(nv)
        cand[j] = 2.0
        if np.linalg.matrix_rank(np.vstack(T + [cand]), tol=1e-10) == len(T) + 1:
            T.append(cand)
            d.append(1.0)
    T = np.asarray(T)
    if T.shape[0] != nv or np.linalg.matrix_rank(T) < nv:
        raise DegenerateError("projection direction is degenerate")
    return T, np.linalg.solve(T, np.asarray(d))


def _projection_coords(psi, lead: PayoffSupport, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Coordinates whose first entry is ``(psi^T v - mu) / sigma``."""
    psi = np.asarray(psi, dtype=float)
    return _affine_coords(psi / lead.half_width, lead.center / lead.half_width, m + 1)


def _series_moments(p, s: State, h: float, psi, support: PayoffSupport, n: int, op=None) -> np.ndarray:
    """``E[P_k(U)]``, ``k = 0..n``, for ``U = (Z - mu) / sigma`` through an orthogonal-basis generator."""
    if op is None or not isinstance(op, OrthoMomentOperator) or op.degree < n:
        T, c = _projection_coords(psi, support, p.m)
        op = ortho_generator(p, n, T, c, "legendre")
    ev = op.expectations(s, h)
    lead = (0,) * p.m
    return np.array([ev[op.index[(k,) + lead]] for k in range(n + 1)])


@dataclass(frozen=True)
class OptionPrice:
    """Approximate option price with its uniform approximation bound."""

    price: float
    error_bound: float
    order: int
    approx: object = field(default=None, repr=False)


def cds_option_price(
    p,
    s: State,
    t: float,
    t0: float,
    tM: float,
    k: float,
    n: int,
    r: float = 0.0,
    delta: float = 0.4,
    frequency: int = 4,
    op: MomentOperator | None = None,
    method: str = "series",
) -> OptionPrice:
    """Price of the option to enter a CDS (payer side) at ``t0``.

    Parameters
    ----------
    p : LhcParams or LhccParams
    s : State
        Pre-default state at ``t``.
    t, t0, tM : float
        Valuation date, expiry (start of protection) and CDS maturity.
    k : float
        Strike spread as a decimal.
    n : int
        Legendre order.
    method : {"series", "powers"}
        ``"series"`` values each ``P_k(U)`` with the generator written on a
        Legendre basis in coordinates aligned with ``Z``, which stays
        accurate at high order.  ``"powers"`` expands the approximation in
        powers of ``Z`` and uses :func:`z_moments`; cancellation makes it
        unreliable beyond order 20.

    Returns
    -------
    OptionPrice
        ``price`` and the discounted sup error ``error_bound``.
    """
    p = _as_lhc(p)
    t = check_scalar(t, "t")
    t0 = check_scalar(t0, "t0", lo=t)
    delta = check_recovery(delta)
    legs = cds_legs(p, t0, TenorGrid.regular(t0, tM, frequency), r, delta)
    psi = legs.psi_cds(k)
    support = cds_option_support(legs, k)
    scale = np.exp(-r * (t0 - t)) / s.y
    approx = legendre_payoff_coeffs(support, n, scale)
    h = t0 - t
    if support.b_max <= 0.0:
        return OptionPrice(0.0, approx.sup_error, n, approx)
    if method == "series":
        EP = _series_moments(p, s, h, psi, support, n)
        price = float(approx.legendre_series() @ EP)
    elif method == "powers":
        EZ = z_moments(p, s, h, psi, n, _moment_operator(p, max(n, 1), op))
        powers = L.Legendre(approx.legendre_series(), domain=[support.b_min, support.b_max]).convert(kind=np.polynomial.Polynomial)
        cz = np.pad(powers.coef, (0, n + 1 - powers.coef.shape[0]))
        price = float(cz @ EZ)
    else:
        raise InvalidInputError(f"unknown method {method!r}")
    return OptionPrice(price, approx.sup_error, n, approx)


# ---------------------------------------------------------------- index options

def cdis_option_payoff_homogeneous(N: int, N_t: int, delta: float, y_t: float, discount: float = 1.0):
    """Index option payoff on identical firms as a function of ``(y, x)``.

    ``y`` is the survival level at expiry and ``x = psi_cds^T (y, X)`` the
    single-name payer value.  Survivors among the ``N - N_t`` live names
    are binomial with probability ``y / y_t``:

        f(y, x) = discount / N sum_j C(n, j) p^j (1-p)^(n-j) (j x / y + (1 - delta)(N - j))^+.

    Returns
    -------
    callable
        Vectorised in ``y`` and ``x``.
    """
    delta = check_recovery(delta)
    if not 0 <= N_t < N:
        raise InvalidInputError("need 0 <= N_t < N")
    n = N - N_t
    j = np.arange(n + 1)

    def f(y, x):
        y = np.asarray(y, dtype=float)
        x = np.asarray(x, dtype=float)
        yb, xb = np.broadcast_arrays(y, x)
        p = np.clip(yb / y_t, 0.0, 1.0)[..., None]
        w = binom.pmf(j, n, p)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(yb > 0, xb / yb, 0.0)[..., None]
        inner = np.maximum(j * ratio + (1.0 - delta) * (N - j), 0.0)
        return discount / N * np.sum(w * inner, axis=-1)

    return f


def chebyshev_nodes(N: int, a: float = -1.0, b: float = 1.0) -> np.ndarray:
    """Chebyshev points ``cos((2i + 1) pi / (2N + 2))``, ``i = 0..N``, mapped to ``[a, b]``."""
    z = (2 * np.arange(N + 1) + 1) * np.pi / (2 * (N + 1))
    return 0.5 * (a + b) + 0.5 * (b - a) * np.cos(z)


@dataclass(frozen=True)
class ChebGrid2D:
    """Tensor Chebyshev interpolant on ``[a, b] x [c, d]``.

    Attributes
    ----------
    order : int
    rect : tuple
        ``(a, b, c, d)``.
    coefficients : ndarray, shape (order + 1, order + 1)
        ``coefficients[n, m]`` multiplies ``T_n(y_hat) T_m(x_hat)``.
    sup_error : float
        Largest deviation from the target on a uniform grid.
    """

    order: int
    rect: tuple
    coefficients: np.ndarray
    sup_error: float = float("nan")

    def scale(self, y, x):
        a, b, c, d = self.rect
        return (2 * np.asarray(y, dtype=float) - (a + b)) / (b - a), (2 * np.asarray(x, dtype=float) - (c + d)) / (d - c)

    def __call__(self, y, x):
        u, w = np.broadcast_arrays(*self.scale(y, x))
        return C.chebval2d(u, w, self.coefficients)


def cheb_fit_2d(f, rect, N: int, grid: int = SUP_GRID_2D) -> ChebGrid2D:
    """Interpolate ``f`` at the tensor Chebyshev nodes of order ``N``.

    ``c_{n,m} = 2^{1{n>0} + 1{m>0}} / (N + 1)^2 sum_{i,j} f(y_i, x_j) cos(n z_i) cos(m z_j)``.
    """
    N = int(N)
    if N < 0:
        raise InvalidInputError("order must be non-negative")
    a, b, c, d = (float(v) for v in rect)
    if not (b > a and d > c):
        raise DegenerateError("interpolation rectangle is degenerate")
    z = (2 * np.arange(N + 1) + 1) * np.pi / (2 * (N + 1))
    yn = 0.5 * (a + b) + 0.5 * (b - a) * np.cos(z)
    xn = 0.5 * (c + d) + 0.5 * (d - c) * np.cos(z)
    F = np.asarray(f(yn[:, None], xn[None, :]), dtype=float)
    Cz = np.cos(np.outer(np.arange(N + 1), z))  # (n, i)
    w = np.where(np.arange(N + 1) > 0, 2.0, 1.0)
    coef = (w[:, None] * w[None, :]) * (Cz @ F @ Cz.T) / (N + 1) ** 2
    out = ChebGrid2D(N, (a, b, c, d), coef)
    gy = np.linspace(a, b, grid)
    gx = np.linspace(c, d, grid)
    err = float(np.max(np.abs(out(gy[:, None], gx[None, :]) - f(gy[:, None], gx[None, :]))))
    object.__setattr__(out, "sup_error", err)
    return out


def cdis_option_homogeneous(
    p,
    s: State,
    t: float,
    t0: float,
    tM: float,
    k: float,
    N: int,
    N_t: int,
    order: int,
    r: float = 0.0,
    delta: float = 0.4,
    frequency: int = 4,
) -> OptionPrice:
    """Index option on ``N`` identical firms by tensor Chebyshev interpolation.

    The payoff is interpolated on ``[e^{-gamma^T 1 h} y_t, y_t] x y_t [b_min, b_max]``
    and each product ``T_n(y_hat) T_m(x_hat)`` is valued with the generator
    written on a Chebyshev basis in the coordinates ``(y_hat, x_hat)``.
    """
    p = _as_lhc(p)
    if order > CHEB_MAX_ORDER:
        raise CapacityError(f"Chebyshev order {order} exceeds the limit {CHEB_MAX_ORDER}")
    t = check_scalar(t, "t")
    t0 = check_scalar(t0, "t0", lo=t)
    delta = check_recovery(delta)
    h = t0 - t
    legs = cds_legs(p, t0, TenorGrid.regular(t0, tM, frequency), r, delta)
    psi = legs.psi_cds(k)
    sup = cds_option_support(legs, k).scaled(s.y)
    y_lo = s.y * np.exp(-p.gamma.sum() * h)
    y_hi = s.y
    if y_hi - y_lo < 1e-14:
        y_lo = y_hi * (1.0 - 1e-8)
    if sup.b_max - sup.b_min <= 0.0:
        raise DegenerateError("payoff support is degenerate (b_max = b_min)")
    f = cdis_option_payoff_homogeneous(N, N_t, delta, s.y, np.exp(-r * h))
    cg = cheb_fit_2d(f, (y_lo, y_hi, sup.b_min, sup.b_max), order)
    nv = p.m + 1
    ey = np.zeros(nv)
    ey[0] = 2.0 / (y_hi - y_lo)
    rows = np.vstack([ey, 2.0 * psi / (sup.b_max - sup.b_min)])
    offs = np.array([(y_hi + y_lo) / (y_hi - y_lo), (sup.b_max + sup.b_min) / (sup.b_max - sup.b_min)])
    T, c = _affine_coords(rows, offs, nv)
    op = ortho_generator(p, 2 * order, T, c, "chebyshev")
    ev = op.expectations(s, h)
    rest = (0,) * (nv - 2)
    price = 0.0
    for n_, m_ in product(range(order + 1), repeat=2):
        price += cg.coefficients[n_, m_] * ev[op.index[(n_, m_) + rest]]
    return OptionPrice(float(price), cg.sup_error, order, cg)


def cdis_option_exact(
    portfolio,
    states,
    alive,
    t: float,
    t0: float,
    tM: float,
    k: float,
    r: float = 0.0,
    frequency: int = 4,
    n_paths: int = 20_000,
    dt: float = 1e-3,
    seed: int = 0,
) -> tuple[float, float]:
    """Index option by enumerating all survival configurations at expiry.

    Every configuration ``alpha`` in ``{0, 1}^N`` contributes its
    conditional probability given ``(Y_{t0}, X_{t0})`` times the payoff; the
    outer expectation over the factors is a Monte Carlo average.

    Returns
    -------
    price, standard_error : float
    """
    from .portfolio import Portfolio, cdis_legs  # noqa: F401
    from .pricing import cds_legs as _legs
    from .model import LinearModel
    from .sim import PathConfig, simulate_paths

    if not isinstance(portfolio, Portfolio):
        raise InvalidInputError("cdis_option_exact needs a Portfolio")
    if portfolio.construction != "linear":
        raise InvalidInputError("the exact index option supports the linear construction")
    N = portfolio.n_firms
    if N > EXACT_MAX_FIRMS:
        raise CapacityError(f"{N} firms exceed the exact enumeration limit {EXACT_MAX_FIRMS}")
    t = check_scalar(t, "t")
    t0 = check_scalar(t0, "t0", lo=t)
    alive = np.ones(N, dtype=bool) if alive is None else np.asarray(alive, dtype=bool).reshape(-1)
    delta = portfolio.recovery
    disc = np.exp(-r * (t0 - t))
    states = list(states) if isinstance(states, (list, tuple)) else [states]
    d = portfolio.d
    if not alive.any():
        return float(disc * (1.0 - delta)), 0.0
    grid = TenorGrid.regular(t0, tM, frequency)
    base = portfolio.stacked_model()
    unit = []
    for j in range(d):
        lin = LinearModel(base.c, base.gamma_block, base.b, base.beta, np.eye(d)[j])
        lg = _legs(lin, t0, grid, r, delta)
        unit.append(lg.psi_prot - k * lg.psi_prem)
    unit = np.asarray(unit)  # (d, dim)
    h = t0 - t
    if h > 0:
        cfg = PathConfig(dt=min(dt, h), horizon=h, n_paths=n_paths, seed=seed)
        ens = simulate_paths(list(portfolio.blocks), states, cfg)
        V = ens.state_at(h)
    else:
        from .portfolio import stack_states

        V = stack_states(portfolio, states)[None, :]
    A = portfolio.firms
    y0 = np.array([st.y if isinstance(st, State) else np.asarray(st)[0] for st in states])
    S0 = A @ y0
    S1 = V[:, :d] @ A.T  # (paths, N)
    val = (V @ unit.T) @ A.T / S1  # payer value per surviving firm
    prob = np.clip(S1 / S0, 0.0, 1.0)
    tot = np.zeros(V.shape[0])
    live = np.flatnonzero(alive)
    dead_loss = (1.0 - delta) * (N - live.size)
    for bits in product((0, 1), repeat=live.size):
        bits = np.asarray(bits, dtype=bool)
        w = np.prod(np.where(bits, prob[:, live], 1.0 - prob[:, live]), axis=1)
        inner = val[:, live[bits]].sum(axis=1) + (1.0 - delta) * (live.size - bits.sum()) + dead_loss
        tot += w * np.maximum(inner, 0.0)
    pay = disc / N * tot
    se = float(np.std(pay, ddof=1) / np.sqrt(pay.shape[0])) if pay.shape[0] > 1 else 0.0
    return float(pay.mean()), se
