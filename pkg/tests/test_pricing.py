import math

import numpy as np
import pytest
from scipy.integrate import quad

from linearcredit.exceptions import DegenerateError, InvalidInputError
from linearcredit.model import LhcParams, State, canonicalize, constant_intensity_model, lhcc_to_lhc
from linearcredit.moments import generator_matrix
from linearcredit.pricing import (
    BP,
    CdsLegs,
    TenorGrid,
    bond_recovery_default,
    bond_recovery_maturity,
    bond_zero,
    cds_legs,
    cds_legs_from_curve,
    cds_spread,
    contingent_default,
    psi_d,
    psi_dstar,
    psi_z,
    ucva,
)

from conftest import RATE, fitted_cascade

GAMMA = 0.25


@pytest.fixture
def const():
    return constant_intensity_model(GAMMA, 0.3), State(1.0, [1.0])


def survival(model, s, u, r=0.0):
    return bond_zero(model, s, 0.0, u, r) * math.exp(r * u) if u > 0 else 1.0


def quad_legs(model, s, grid, r, delta):
    """Legs by adaptive quadrature of the survival curve."""
    S = lambda u: survival(model, s, u)  # noqa: E731
    dens = lambda u: -(S(u + 1e-6) - S(u - 1e-6)) / 2e-6  # noqa: E731
    prot, prem = 0.0, 0.0
    prev = grid.t0
    for tj in grid.dates:
        prot += quad(lambda u: math.exp(-r * u) * dens(u), prev, tj, epsabs=1e-13)[0]
        prem += (tj - prev) * math.exp(-r * tj) * S(tj)
        prem += quad(lambda u: (u - prev) * math.exp(-r * u) * dens(u), prev, tj, epsabs=1e-13)[0]
        prev = tj
    return (1 - delta) * prot, prem


class TestTenorGrid:
    def test_regular(self):
        g = TenorGrid.regular(1.0, 6.0, 4)
        assert g.dates.size == 20 and g.dates[-1] == 6.0
        np.testing.assert_allclose(g.accruals, 0.25)

    def test_stub(self):
        g = TenorGrid.regular(0.1, 1.0, 4)
        assert g.accruals[0] == pytest.approx(0.15)

    def test_invalid(self):
        with pytest.raises(InvalidInputError):
            TenorGrid(1.0, np.array([0.5]))
        with pytest.raises(InvalidInputError):
            TenorGrid.regular(1.0, 1.0)


class TestBonds:
    def test_same_date(self, one_factor, s0):
        assert bond_zero(one_factor, s0, 2.0, 2.0, RATE) == pytest.approx(1.0, abs=1e-15)
        np.testing.assert_array_equal(psi_d(one_factor, 1.0, 1.0).psi, np.zeros(2))

    @pytest.mark.parametrize("r", [0.0, RATE])
    def test_constant_intensity(self, const, r):
        p, s = const
        for T in (1.0, 5.0, 10.0):
            assert bond_zero(p, s, 0.0, T, r) == pytest.approx(math.exp(-(r + GAMMA) * T), abs=1e-12)
            cd = GAMMA * (1 - math.exp(-(r + GAMMA) * T)) / (r + GAMMA)
            assert contingent_default(p, s, 0.0, T, r) == pytest.approx(cd, abs=1e-12)

    def test_recovery_at_maturity(self, const):
        p, s = const
        T, r = 4.0, RATE
        assert bond_recovery_maturity(p, 0.0, T, r, 1.0)(s) == pytest.approx(math.exp(-r * T), abs=1e-14)
        assert bond_recovery_maturity(p, 0.0, T, r, 0.0)(s) == pytest.approx(bond_zero(p, s, 0, T, r), abs=1e-15)
        expect = 0.6 * math.exp(-(r + GAMMA) * T) + 0.4 * math.exp(-r * T)
        assert bond_recovery_maturity(p, 0.0, T, r, 0.4)(s) == pytest.approx(expect, abs=1e-12)
        with pytest.raises(InvalidInputError):
            bond_recovery_maturity(p, 0.0, T, r, 1.5)

    def test_recovery_at_default(self, one_factor, s0):
        bd = bond_recovery_default(one_factor, s0, 0.0, 5.0, RATE, 0.4)
        ref = bond_zero(one_factor, s0, 0, 5, RATE) + 0.4 * contingent_default(one_factor, s0, 0, 5, RATE)
        assert bd == pytest.approx(ref, abs=1e-15)

    def test_default_time_claim_quadrature(self, one_factor, s0):
        S = lambda u: survival(one_factor, s0, u)  # noqa: E731
        dens = lambda u: -(S(u + 1e-6) - S(u - 1e-6)) / 2e-6  # noqa: E731
        ref = quad(lambda u: u * math.exp(-RATE * u) * dens(u), 1.0, 3.0, epsabs=1e-13)[0]
        got = psi_dstar(one_factor, 1.0, 3.0, RATE).psi @ s0.vector
        # pricing vectors are conditional on survival to t=1, so compare at t=0 instead
        got0 = psi_dstar(one_factor, 0.0, 3.0, RATE).psi @ s0.vector - psi_dstar(one_factor, 0.0, 1.0, RATE).psi @ s0.vector
        assert got0 == pytest.approx(ref, abs=1e-8)
        assert np.isfinite(got)

    def test_dual_branch(self, one_factor):
        for t, tM in [(0.0, 5.0), (1.0, 6.0)]:
            for r in (0.0, RATE):
                a = psi_d(one_factor, t, tM, r, "inverse").psi
                b = psi_d(one_factor, t, tM, r, "augmented").psi
                np.testing.assert_allclose(a, b, atol=1e-10)

    def test_bounds_and_monotonicity(self, rng):
        p = lhcc_to_lhc(fitted_cascade("B2"))
        prev = 1.0
        for T in np.linspace(0.5, 10, 20):
            s = State(1.0, np.array([0.3, 0.6]))
            b = bond_zero(p, s, 0.0, T, RATE)
            assert 0 <= b <= math.exp(-RATE * T) + 1e-15 and b <= prev + 1e-15
            prev = b
            assert 0 <= contingent_default(p, s, 0.0, T, RATE) <= 1
        prev = 1.0
        for g in (0.05, 0.1, 0.2, 0.4):
            b = bond_zero(LhcParams([g], [0.2], [[-1.05]], [0.5]), State(1.0, [0.2]), 0, 5)
            assert b <= prev
            prev = b


class TestCds:
    def test_full_recovery(self, one_factor):
        legs = cds_legs(one_factor, 0.0, TenorGrid.regular(0, 5), 0.0, 1.0)
        np.testing.assert_array_equal(legs.psi_prot, np.zeros(2))

    def test_riskless_annuity(self):
        p = LhcParams([0.0], [0.2], [[-1.05]], [0.5])
        grid = TenorGrid.regular(0.5, 3.0)
        legs = cds_legs(p, 0.0, grid, RATE, 0.4)
        s = State(1.0, [0.3])
        ann = float(np.sum(grid.accruals * np.exp(-RATE * grid.dates)))
        assert legs.values(s)[1] == pytest.approx(ann, abs=1e-13)
        assert cds_spread(p, s, 0.0, grid, RATE, 0.4) == 0.0

    def test_single_period_constant_intensity(self, const):
        p, s = const
        r, T, lam = RATE, 1.0, GAMMA
        legs = cds_legs(p, 0.0, TenorGrid(0.0, np.array([T])), r, 0.4)
        k = r + lam
        prot = 0.6 * lam * (1 - math.exp(-k * T)) / k
        prem = T * math.exp(-k * T) + lam * (1 - math.exp(-k * T) * (1 + k * T)) / k**2
        got = legs.values(s)
        assert got[0] == pytest.approx(prot, abs=1e-13)
        assert got[1] == pytest.approx(prem, abs=1e-13)

    @pytest.mark.parametrize("r", [0.0, RATE])
    def test_against_quadrature(self, one_factor, s0, r):
        grid = TenorGrid.regular(1.0, 6.0)
        got = cds_legs(one_factor, 0.0, grid, r, 0.4).values(s0)
        ref = quad_legs(one_factor, s0, grid, r, 0.4)
        np.testing.assert_allclose(got, ref, atol=1e-7)

    def test_curve_version(self, bombardier2):
        s = State(1.0, np.array([0.05, 0.1]))
        grid = TenorGrid.regular(0.0, 5.0)
        legs = cds_legs(bombardier2, 0.0, grid, RATE, 0.4)
        curve = cds_legs_from_curve(
            np.vectorize(lambda u: survival(bombardier2, s, u)), 0.0, grid, RATE, 0.4, nodes=48
        )
        np.testing.assert_allclose(legs.values(s), curve, atol=1e-12)

    def test_forward_spread_band(self, one_factor, s0):
        spread = cds_spread(one_factor, s0, 0.0, TenorGrid.regular(1.0, 6.0), 0.0, 0.4) / BP
        assert 250 < spread < 350

    def test_leg_additivity(self, one_factor):
        full = cds_legs(one_factor, 0.0, TenorGrid.regular(1.0, 6.0), RATE, 0.4)
        a = cds_legs(one_factor, 0.0, TenorGrid.regular(1.0, 3.0), RATE, 0.4)
        b = cds_legs(one_factor, 0.0, TenorGrid.regular(3.0, 6.0), RATE, 0.4)
        np.testing.assert_allclose(full.psi_prot, a.psi_prot + b.psi_prot, atol=1e-12)
        np.testing.assert_allclose(full.psi_prem, a.psi_prem + b.psi_prem, atol=1e-12)

    def test_canonical_invariance(self, bombardier2):
        p = lhcc_to_lhc(bombardier2)
        L = np.array([1.7, 0.6])
        x = np.array([0.1, 0.3])
        grid = TenorGrid.regular(0.0, 5.0)
        a = cds_spread(p, State(1.0, x), 0.0, grid, RATE, 0.4)
        b = cds_spread(canonicalize(p, L), State(1.0, x / L), 0.0, grid, RATE, 0.4)
        assert a == pytest.approx(b, abs=1e-12)

    def test_degenerate_annuity(self):
        legs = CdsLegs(np.ones(2), np.zeros(2), 0.4, 0.0, TenorGrid.regular(0.0, 1.0), np.ones(1))
        with pytest.raises(DegenerateError):
            legs.spread(State(1.0, [0.5]))


class TestUcva:
    def test_zero_and_unit_exposure(self, one_factor, s0):
        assert ucva(one_factor, s0, 0.0, 5.0, RATE, {}) == 0.0
        one = ucva(one_factor, s0, 0.0, 5.0, RATE, {(0, 0): 1.0})
        assert one == pytest.approx(contingent_default(one_factor, s0, 0.0, 5.0, RATE), abs=1e-12)

    def test_linear_exposure_quadrature(self, one_factor, s0):
        op = generator_matrix(one_factor, 2)
        # E[e^{-r u} Y_u gamma X_u] integrated over u
        ref = quad(
            lambda u: math.exp(-RATE * u) * op.moment(s0, {(1, 1): 0.25}, u), 0.0, 5.0, epsabs=1e-13
        )[0]
        assert ucva(one_factor, s0, 0.0, 5.0, RATE, {(1, 0): 1.0}) == pytest.approx(ref, abs=1e-12)
