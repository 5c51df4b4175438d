import math

import numpy as np
import pytest
from scipy.integrate import quad_vec

from linearcredit.exceptions import InvalidInputError
from linearcredit.linmat import (
    exp_integral,
    exp_integral_weighted,
    exp_integrals,
    expm,
    expm_action,
    lhcc_astar_invertible,
)
from linearcredit.model import LhccParams, lhcc_to_lhc

from conftest import RATE, random_stable, fitted_cascade


def taylor_exp(A, terms=50):
    out = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, terms):
        term = term @ A / k
        out = out + term
    return out


class TestExpm:
    def test_zero_and_scalar(self):
        np.testing.assert_array_equal(expm(np.zeros((3, 3))), np.eye(3))
        assert expm([[-1.0]])[0, 0] == pytest.approx(math.exp(-1), abs=1e-15)

    def test_taylor_oracle(self, rng):
        for _ in range(5):
            A = rng.normal(size=(4, 4))
            A *= 0.9 / np.max(np.abs(np.linalg.eigvals(A)))
            np.testing.assert_allclose(expm(A), taylor_exp(A), rtol=0, atol=1e-12)

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidInputError):
            expm([[np.nan, 0.0], [0.0, 1.0]])
        with pytest.raises(InvalidInputError):
            expm(np.zeros((2, 3)))


class TestExpmAction:
    def test_zero_horizon_and_diagonal(self):
        v = np.array([1.0, 2.0])
        np.testing.assert_array_equal(expm_action(np.eye(2), 0.0, v), v)
        np.testing.assert_allclose(expm_action(np.diag([-1.0, -2.0]), 1.0, [1, 1]), [math.exp(-1), math.exp(-2)],
                                   rtol=1e-14)

    def test_matches_dense(self, rng):
        A = rng.normal(size=(5, 5))
        v = rng.normal(size=5)
        ref = expm(A * 0.7) @ v
        np.testing.assert_allclose(expm_action(A, 0.7, v), ref, rtol=1e-12, atol=1e-12 * np.abs(ref).max())

    def test_large_dimension_uses_action(self, rng):
        A = random_stable(rng, 600) * 0.1
        v = rng.normal(size=600)
        ref = expm(A * 0.5) @ v
        np.testing.assert_allclose(expm_action(A, 0.5, v), ref, atol=1e-10)

    def test_semigroup(self, rng):
        A = random_stable(rng, 6)
        v = rng.normal(size=6)
        two = expm_action(A, 0.4, expm_action(A, 0.9, v))
        np.testing.assert_allclose(expm_action(A, 1.3, v), two, atol=1e-10)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            expm_action(np.eye(3), 1.0, [1.0, 2.0])


class TestExpIntegral:
    def test_trivial_cases(self):
        np.testing.assert_allclose(exp_integral(np.zeros((2, 2)), 1.5), 1.5 * np.eye(2), atol=1e-15)
        assert exp_integral([[-1.0]], 1.0)[0, 0] == pytest.approx(1 - math.exp(-1), abs=1e-15)

    def test_singular_matrix_quadrature(self):
        A = np.array([[0.0, 1.0], [0.0, 0.0]])
        ref, _ = quad_vec(lambda s: expm(A * s), 0, 2, epsabs=1e-13)
        np.testing.assert_allclose(exp_integral(A, 2.0), ref, atol=1e-10)

    def test_branches_agree(self, rng):
        for k in range(1, 11):
            A = random_stable(rng, k)
            np.testing.assert_allclose(
                exp_integral(A, 1.7, "inverse"), exp_integral(A, 1.7, "augmented"), atol=1e-10
            )

    def test_weighted_trivial(self):
        assert exp_integral_weighted([[-1.0]], 0.0, 1.0)[0, 0] == pytest.approx(1 - 2 * math.exp(-1), abs=1e-14)
        np.testing.assert_array_equal(exp_integral_weighted(np.eye(2), 1.0, 1.0), np.zeros((2, 2)))

    def test_weighted_quadrature(self, rng):
        A = random_stable(rng, 3)
        t, tM = 0.5, 2.25
        ref, _ = quad_vec(lambda s: s * expm(A * (s - t)), t, tM, epsabs=1e-13)
        for method in ("inverse", "augmented"):
            np.testing.assert_allclose(exp_integral_weighted(A, t, tM, method), ref, atol=1e-10)

    def test_weighted_shift_identity(self, rng):
        A = random_stable(rng, 4)
        t, tM = 0.8, 3.1
        lhs = exp_integral_weighted(A, t, tM)
        rhs = exp_integral_weighted(A, 0.0, tM - t) + t * exp_integral(A, tM - t)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_weighted_rejects_reversed(self):
        with pytest.raises(InvalidInputError):
            exp_integral_weighted(np.eye(2), 2.0, 1.0)

    def test_exp_integrals_consistent(self, rng):
        A = random_stable(rng, 4)
        for method in ("inverse", "augmented"):
            E, F1, W = exp_integrals(A, 1.2, 0.3, method)
            np.testing.assert_allclose(E, expm(1.2 * A), atol=1e-13)
            np.testing.assert_allclose(F1, exp_integral(A, 1.2), atol=1e-12)
            np.testing.assert_allclose(W, exp_integral_weighted(A, 0.3, 1.5), atol=1e-12)


class TestCascadeInvertibility:
    def test_positive_rate(self):
        ok, cond = lhcc_astar_invertible(RATE, fitted_cascade("B2"))
        assert ok and cond > 0

    def test_zero_rate_falls_back_to_rank(self):
        ok, _ = lhcc_astar_invertible(0.0, fitted_cascade("B2"))
        assert ok
        # gamma1 = 0 makes the survival row vanish, so A is singular at r = 0
        p = LhccParams(0.0, np.array([1.0]), np.array([1.0]), np.array([0.1]))
        ok, _ = lhcc_astar_invertible(0.0, p)
        assert not ok

    def test_determinant_sign(self):
        p = fitted_cascade("B3")
        A = lhcc_to_lhc(p, check=False).drift_matrix(0.01)
        # all eigenvalues have negative real part, so the sign is (-1)^(1+m)
        assert np.sign(np.linalg.det(A)) == (-1) ** (1 + p.m)
