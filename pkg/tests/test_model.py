import numpy as np
import pytest

from linearcredit.exceptions import ConstraintError, DomainError, InvalidInputError
from linearcredit.model import (
    LhccParams,
    LhcParams,
    LinearModel,
    State,
    canonicalize,
    drift_matrix,
    intensity,
    lhcc_to_lhc,
    mpr_lambda,
    validate_lhc,
    validate_mpr,
)
from linearcredit.pricing import bond_zero

from conftest import FITTED, fitted_cascade


class TestTypes:
    def test_linear_model_checks_weights(self):
        with pytest.raises(InvalidInputError):
            LinearModel(np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)), np.array([0.5]))

    def test_state_domain(self):
        with pytest.raises(DomainError):
            State(1.0, np.array([1.2]))
        with pytest.raises(DomainError):
            State(0.0, np.array([0.0]))
        s = State(0.5, np.array([0.1, 0.5]))
        np.testing.assert_array_equal(State.from_vector(s.vector).vector, s.vector)

    def test_lhc_embedding(self, one_factor):
        lin = one_factor.to_linear()
        assert lin.n == 1 and lin.m == 1
        np.testing.assert_array_equal(lin.gamma_block, [[-0.25]])
        np.testing.assert_array_equal(lin.c, [[0.0]])


class TestValidateLhc:
    def test_one_factor(self, one_factor):
        rep = validate_lhc(one_factor)
        assert rep.valid
        assert rep.slack_upper[0] == pytest.approx(0.6, abs=1e-15)
        assert rep.slack_zero[0] == pytest.approx(0.2, abs=1e-15)
        # b = 0.2 < sigma^2 / 2 = 0.28125: the face x = 0 can be reached
        assert not rep.zero_unattainable[0]

    def test_frozen_factor(self):
        rep = validate_lhc(LhcParams([0.0], [0.0], [[0.0]], [0.0]))
        assert rep.valid and rep.slack_zero[0] == 0 and rep.slack_upper[0] == 0

    def test_invalid(self):
        assert not validate_lhc(LhcParams([0.25], [-0.1], [[-1.0]], [0.1])).valid


class TestCascade:
    def test_bombardier(self):
        p = fitted_cascade("B2")
        lhc = lhcc_to_lhc(p)
        assert validate_lhc(lhc).valid
        assert 1 - p.gamma1 / p.kappa[0] == pytest.approx(0.6245, abs=1e-4)
        assert np.all(p.binding(5e-3))

    def test_edge(self):
        lhc = lhcc_to_lhc(LhccParams(0.0, np.array([1.0]), np.array([1.0]), np.array([0.1])))
        assert lhc.beta[0, 0] == -1 and lhc.b[0] == 1 and lhc.gamma[0] == 0

    def test_disney3(self):
        assert validate_lhc(lhcc_to_lhc(fitted_cascade("D3"), check=False), tol=2e-3).valid

    def test_violation_names_dimension(self):
        with pytest.raises(ConstraintError, match="2"):
            lhcc_to_lhc(LhccParams(0.2, np.array([1.0, 1.0]), np.array([0.5, 0.9]), np.array([0.1, 0.1])))

    @pytest.mark.parametrize("name", sorted(FITTED))
    def test_binding_round_trip(self, name):
        g1, kappa, _ = FITTED[name]
        kappa = np.asarray(kappa)
        theta = 1 - g1 / kappa
        theta[0] *= 0.9  # first dimension slack, the others bind
        p = LhccParams(g1, kappa, theta, np.full(kappa.size, 0.3))
        rep = validate_lhc(lhcc_to_lhc(p))
        assert rep.valid
        zero_slack = np.abs(rep.slack_upper) < 1e-12
        np.testing.assert_array_equal(zero_slack, p.binding(1e-12))


class TestDriftAndIntensity:
    def test_drift_matrix(self, one_factor):
        np.testing.assert_allclose(drift_matrix(one_factor), [[0, -0.25], [0.2, -1.05]], atol=1e-15)
        np.testing.assert_array_equal(
            drift_matrix(one_factor, 0.0252), drift_matrix(one_factor) - 0.0252 * np.eye(2)
        )

    def test_intensity(self, one_factor):
        assert intensity(one_factor, State(1.0, [0.0])) == 0.0
        assert intensity(one_factor, State(0.7, [0.7])) == pytest.approx(0.25, abs=1e-15)
        assert intensity(one_factor, State(1.0, [0.2])) == pytest.approx(0.05, abs=1e-15)

    def test_intensity_bounds(self, rng):
        p = lhcc_to_lhc(fitted_cascade("B3"), check=False)
        for _ in range(200):
            y = rng.uniform(0.01, 1)
            lam = intensity(p, State(y, rng.uniform(0, y, size=3)))
            assert 0 <= lam <= p.gamma.sum() + 1e-15


class TestCanonicalize:
    def test_identity_and_formula(self, one_factor):
        assert canonicalize(one_factor, [1.0]) == one_factor or np.allclose(
            canonicalize(one_factor, [1.0]).b, one_factor.b
        )
        q = canonicalize(one_factor, [2.0])
        assert q.gamma[0] == 0.5 and q.b[0] == pytest.approx(0.1) and q.beta[0, 0] == pytest.approx(-1.05)

    def test_price_invariance(self, one_factor):
        L = np.array([2.0])
        q = canonicalize(one_factor, L)
        a = bond_zero(one_factor, State(1.0, [0.2]), 0.0, 5.0)
        b = bond_zero(q, State(1.0, np.array([0.2]) / L), 0.0, 5.0)
        assert a == pytest.approx(b, abs=1e-12)

    def test_group_action(self, rng):
        p = lhcc_to_lhc(fitted_cascade("B3"), check=False)
        L1, L2 = rng.uniform(0.5, 2, 3), rng.uniform(0.5, 2, 3)
        a = canonicalize(canonicalize(p, L1), L2)
        b = canonicalize(p, L1 * L2)
        for f in ("gamma", "b", "beta"):
            np.testing.assert_allclose(getattr(a, f), getattr(b, f), rtol=1e-15, atol=1e-16)


class TestMarketPriceOfRisk:
    def test_no_change(self, one_factor):
        lam = mpr_lambda(one_factor, one_factor.b, one_factor.beta, State(1.0, [0.3]))
        np.testing.assert_array_equal(lam, [0.0])

    def test_case_beta_shift(self, one_factor):
        lam = mpr_lambda(one_factor, one_factor.b, one_factor.beta - 0.1, State(1.0, [0.5]))
        assert lam[0] == pytest.approx(-0.1 * 0.5 / (0.75 * 0.5), rel=1e-14)
        # the x_i = 0 face is covered by the cancelled form
        assert mpr_lambda(one_factor, one_factor.b, one_factor.beta - 0.1, State(1.0, [0.0]))[0] == 0.0

    def test_generic_boundary_is_domain_error(self, one_factor):
        with pytest.raises(DomainError):
            mpr_lambda(one_factor, one_factor.b + 0.1, one_factor.beta, State(1.0, [0.0]))

    def test_validate(self, one_factor):
        p = one_factor.with_sigma([0.2])
        rep = validate_mpr(p, p.b, p.beta - 0.05, State(1.0, [0.3]))
        assert rep.case == ("zero",)
        assert rep.valid
