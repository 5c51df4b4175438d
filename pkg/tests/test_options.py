import math

import numpy as np
import pytest
from scipy.integrate import quad

from linearcredit.exceptions import CapacityError, DegenerateError, InvalidInputError
from linearcredit.model import State
from linearcredit.moments import generator_matrix
from linearcredit.options import (
    PayoffSupport,
    cdis_option_exact,
    cdis_option_homogeneous,
    cdis_option_payoff_homogeneous,
    cds_option_price,
    cds_option_support,
    cheb_fit_2d,
    chebyshev_nodes,
    legendre_payoff_coeffs,
    z_moments,
)
from linearcredit.portfolio import Portfolio
from linearcredit.pricing import BP, TenorGrid, bond_zero, cds_legs
from linearcredit.sim import PathConfig, simulate_paths

T0, TM = 1.0, 6.0


@pytest.fixture
def legs(one_factor):
    return cds_legs(one_factor, T0, TenorGrid.regular(T0, TM, 4), 0.0, 0.4)


# ---------------------------------------------------------------- support

def test_support_definition():
    s = cds_option_support(np.array([0.02, -0.05]), 0.0)
    assert (s.b_min, s.b_max) == (-0.05, 0.02)
    s = cds_option_support(np.array([0.01, 0.03]), 0.0)
    assert s.b_min == 0.0


def test_support_widens_with_strike(legs):
    lo = cds_option_support(legs, 250 * BP)
    hi = cds_option_support(legs, 350 * BP)
    assert hi.b_max - hi.b_min > lo.b_max - lo.b_min
    assert lo.b_min <= 0.0 <= lo.b_max


def test_support_rejects_inverted_bounds():
    with pytest.raises(InvalidInputError):
        PayoffSupport(1.0, -1.0)


# ---------------------------------------------------------------- Legendre coefficients

def test_legendre_low_order_coefficients():
    ap = legendre_payoff_coeffs(PayoffSupport(-1.0, 1.0), 3)
    assert ap.coefficients[0] == pytest.approx(1 / (2 * math.sqrt(2)), abs=1e-15)
    assert ap.coefficients[1] == pytest.approx(math.sqrt(1.5) / 3, abs=1e-15)


@pytest.mark.parametrize("bounds", [(-1.0, 1.0), (-0.3, 0.05), (-0.01, 0.2), (0.1, 0.4), (-0.5, -0.1)])
def test_legendre_coefficients_match_quadrature(bounds):
    sup = PayoffSupport(*bounds)
    ap = legendre_payoff_coeffs(sup, 12, scale=1.7)
    mu, sig = sup.center, sup.half_width
    for k in range(13):
        norm = math.sqrt((2 * k + 1) / (2 * sig))

        def integrand(z):
            return 1.7 * max(z, 0.0) * norm * np.polynomial.legendre.legval((z - mu) / sig, np.eye(13)[k])

        expect = quad(integrand, *bounds, points=[0.0] if bounds[0] < 0 < bounds[1] else None, epsabs=1e-14)[0]
        assert ap.coefficients[k] == pytest.approx(expect, abs=1e-12)


def test_legendre_errors_decrease(legs):
    for k in (250, 300, 350):
        sup = cds_option_support(legs, k * BP)
        errs = [legendre_payoff_coeffs(sup, n).sup_error for n in (1, 5, 10, 20, 30)]
        assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))
        assert errs[-1] < errs[0] / 10


def test_legendre_mean_square_error_monotone():
    sup = PayoffSupport(-0.4, 1.0)
    z = np.linspace(sup.b_min, sup.b_max, 20001)
    mse = []
    for n in range(0, 25):
        ap = legendre_payoff_coeffs(sup, n)
        mse.append(np.trapezoid((ap(z) - ap.payoff(z)) ** 2, z))
    assert all(b <= a + 1e-14 for a, b in zip(mse, mse[1:]))


def test_legendre_degenerate_support():
    with pytest.raises(DegenerateError):
        legendre_payoff_coeffs(PayoffSupport(0.2, 0.2), 5)


def test_legendre_reconstruction_within_bound():
    ap = legendre_payoff_coeffs(PayoffSupport(-0.2, 0.3), 15)
    z = np.random.default_rng(1).uniform(-0.2, 0.3, 500)
    assert np.max(np.abs(ap(z) - ap.payoff(z))) <= ap.sup_error * 1.05 + 1e-15


# ---------------------------------------------------------------- Z moments

def test_z_moments_low_order(one_factor, s0):
    psi = np.array([0.03, -0.07])
    h = 1.0
    EZ = z_moments(one_factor, s0, h, psi, 2)
    op = generator_matrix(one_factor, 2)
    Ey2 = op.moment(s0, {(2, 0): 1.0}, h)
    Eyx = op.moment(s0, {(1, 1): 1.0}, h)
    Ex2 = op.moment(s0, {(0, 2): 1.0}, h)
    assert EZ[0] == 1.0
    assert EZ[2] == pytest.approx(psi[0] ** 2 * Ey2 + 2 * psi[0] * psi[1] * Eyx + psi[1] ** 2 * Ex2, rel=1e-12)


def test_z_moments_against_simulation(one_factor, s0, legs):
    psi = legs.psi_cds(300 * BP)
    EZ = z_moments(one_factor, s0, T0, psi, 6)
    cfg = PathConfig(dt=1 / 500, horizon=T0, n_paths=100_000, seed=3, record_times=(T0,))
    V = simulate_paths(one_factor, s0, cfg).state_at(T0)
    Z = V @ psi
    for j in range(1, 7):
        est = np.mean(Z**j)
        se = np.std(Z**j, ddof=1) / math.sqrt(Z.shape[0])
        assert abs(est - EZ[j]) < 3 * se + 1e-14, j


def test_z_moments_wrong_length(one_factor, s0):
    with pytest.raises(InvalidInputError):
        z_moments(one_factor, s0, 1.0, [1.0, 2.0, 3.0], 2)


# ---------------------------------------------------------------- CDS options

def test_option_far_strike_is_worthless(one_factor, s0):
    # the true price is zero; approximations stay inside their bounds and shrink
    prices = []
    for n in (5, 10, 20, 30):
        px = cds_option_price(one_factor, s0, 0.0, T0, TM, 0.5, n)
        assert abs(px.price) <= px.error_bound
        prices.append(abs(px.price))
    assert prices[-1] < 1e-5 < prices[0]


def test_option_series_matches_powers(one_factor, s0):
    a = cds_option_price(one_factor, s0, 0.0, T0, TM, 300 * BP, 10, method="series")
    b = cds_option_price(one_factor, s0, 0.0, T0, TM, 300 * BP, 10, method="powers")
    assert a.price == pytest.approx(b.price, abs=1e-9)
    with pytest.raises(InvalidInputError):
        cds_option_price(one_factor, s0, 0.0, T0, TM, 300 * BP, 10, method="other")


def test_option_nonincreasing_in_strike(one_factor, s0):
    prices = [cds_option_price(one_factor, s0, 0.0, T0, TM, k * BP, 12).price for k in range(200, 401, 25)]
    assert all(b <= a + 1e-12 for a, b in zip(prices, prices[1:]))


def test_option_orders_within_bounds(one_factor, s0):
    ref = cds_option_price(one_factor, s0, 0.0, T0, TM, 300 * BP, 30)
    for n in (2, 5, 10, 20):
        px = cds_option_price(one_factor, s0, 0.0, T0, TM, 300 * BP, n)
        assert abs(px.price - ref.price) <= px.error_bound + ref.error_bound


def test_option_against_simulation(one_factor, s0, legs):
    k = 300 * BP
    px = cds_option_price(one_factor, s0, 0.0, T0, TM, k, 30)
    cfg = PathConfig(dt=1 / 500, horizon=T0, n_paths=200_000, seed=11, record_times=(T0,))
    V = simulate_paths(one_factor, s0, cfg).state_at(T0)
    pay = np.maximum(V @ legs.psi_cds(k), 0.0) / s0.y
    est, se = pay.mean(), pay.std(ddof=1) / math.sqrt(pay.shape[0])
    assert abs(px.price - est) < max(1 * BP, 3 * se)


def test_option_discounting(one_factor, s0):
    a = cds_option_price(one_factor, s0, 0.0, T0, TM, 300 * BP, 10, r=0.0)
    b = cds_option_price(one_factor, s0, 0.5, T0, TM, 300 * BP, 10, r=0.0)
    assert a.price != b.price
    with pytest.raises(InvalidInputError):
        cds_option_price(one_factor, s0, 2.0, T0, TM, 300 * BP, 10)


# ---------------------------------------------------------------- index options

def test_index_payoff_single_survivor_branch():
    f = cdis_option_payoff_homogeneous(1, 0, 0.4, 1.0)
    y, x = 0.8, -0.01
    assert f(y, x) == pytest.approx(0.8 * max(x / y, 0.0) + 0.2 * 0.6, abs=1e-15)
    y, x = 0.8, 0.03
    assert f(y, x) == pytest.approx(x + 0.2 * 0.6, abs=1e-15)


def test_index_payoff_full_recovery():
    f = cdis_option_payoff_homogeneous(4, 1, 1.0, 1.0)
    n, y, x = 3, 0.7, 0.02
    p = y
    expect = sum(math.comb(n, j) * p**j * (1 - p) ** (n - j) * max(j * x / y, 0.0) for j in range(n + 1)) / 4
    assert f(y, x) == pytest.approx(expect, abs=1e-15)


def test_index_payoff_without_decay():
    N, N_t, delta = 5, 2, 0.4
    f = cdis_option_payoff_homogeneous(N, N_t, delta, 0.9)
    for x in (-0.05, 0.01):
        assert f(0.9, x) == pytest.approx(max((N - N_t) * x / 0.9 + (1 - delta) * N_t, 0.0) / N, abs=1e-15)


def test_chebyshev_nodes():
    np.testing.assert_allclose(chebyshev_nodes(1), [math.sqrt(0.5), -math.sqrt(0.5)], atol=1e-15)
    z = chebyshev_nodes(6, 2.0, 5.0)
    assert z.min() > 2.0 and z.max() < 5.0


def test_chebyshev_reproduces_polynomials():
    def f(y, x):
        return 1 + 2 * y - 3 * x + y**3 * x**2 - 0.5 * y**2 * x**4
    cg = cheb_fit_2d(f, (0.2, 1.0, -0.3, 0.4), 4)
    gy, gx = np.meshgrid(np.linspace(0.2, 1, 17), np.linspace(-0.3, 0.4, 13), indexing="ij")
    np.testing.assert_allclose(cg(gy, gx), f(gy, gx), atol=1e-12)
    assert cg.sup_error < 1e-12


def test_chebyshev_interpolates_at_nodes():
    f = lambda y, x: np.maximum(x - 0.1 * y, 0.0)  # noqa: E731
    cg = cheb_fit_2d(f, (0.0, 1.0, -1.0, 1.0), 7)
    yn, xn = chebyshev_nodes(7, 0.0, 1.0), chebyshev_nodes(7, -1.0, 1.0)
    np.testing.assert_allclose(cg(yn[:, None], xn[None, :]), f(yn[:, None], xn[None, :]), atol=1e-12)
    with pytest.raises(DegenerateError):
        cheb_fit_2d(f, (1.0, 1.0, -1.0, 1.0), 3)


def test_index_option_homogeneous_vs_enumeration(one_factor, s0):
    k = 300 * BP
    fast = cdis_option_homogeneous(one_factor, s0, 0.0, T0, TM, k, 4, 0, 20)
    pf = Portfolio([one_factor], np.ones((4, 1)), recovery=0.4)
    est, se = cdis_option_exact(pf, [s0], None, 0.0, T0, TM, k, n_paths=40_000, dt=1 / 500, seed=5)
    assert abs(fast.price - est) < 3 * se + fast.error_bound


def test_index_option_error_bounds_shrink(one_factor, s0):
    errs = [cdis_option_homogeneous(one_factor, s0, 0.0, T0, TM, 300 * BP, 4, 0, n).error_bound for n in (4, 12, 24)]
    assert errs[-1] < errs[0]


def test_index_option_single_firm(one_factor, s0):
    k = 300 * BP
    pf = Portfolio([one_factor], [[1.0]], recovery=0.4)
    est, se = cdis_option_exact(pf, [s0], None, 0.0, T0, TM, k, n_paths=40_000, dt=1 / 500, seed=9)
    single = cds_option_price(one_factor, s0, 0.0, T0, TM, k, 30)
    loss = 0.6 * (1 - bond_zero(one_factor, s0, 0.0, T0))
    assert abs(est - (single.price + loss)) < 3 * se + single.error_bound


def test_index_option_limits(one_factor, s0):
    pf = Portfolio([one_factor], np.ones((3, 1)), recovery=0.4)
    est, se = cdis_option_exact(pf, [s0], [False] * 3, 0.0, T0, TM, 300 * BP, r=0.02)
    assert est == pytest.approx(math.exp(-0.02 * T0) * 0.6, abs=1e-15)
    assert se == 0.0
    big = Portfolio([one_factor], np.ones((13, 1)))
    with pytest.raises(CapacityError):
        cdis_option_exact(big, [s0], None, 0.0, T0, TM, 300 * BP)
    with pytest.raises(CapacityError):
        cdis_option_homogeneous(one_factor, s0, 0.0, T0, TM, 300 * BP, 4, 0, 31)
