import numpy as np
import pytest
from numpy.polynomial import legendre as L

from linearcredit.exceptions import CapacityError, InvalidInputError
from linearcredit.linmat import expm_action
from linearcredit.model import State, lhcc_to_lhc
from linearcredit.moments import (
    basis_size,
    enumerate_basis,
    generator_matrix,
    moment,
    ortho_generator,
    poly_mul,
    poly_linear,
)

from conftest import fitted_cascade


class TestBasis:
    def test_small(self):
        assert enumerate_basis(1, 1) == [(0, 0), (1, 0), (0, 1)]
        assert enumerate_basis(1, 2) == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]

    def test_size(self):
        assert basis_size(3, 20) == 10626
        assert len(enumerate_basis(3, 20)) == 10626
        assert len(set(enumerate_basis(2, 7))) == basis_size(2, 7)


class TestGenerator:
    def test_x_squared(self, one_factor):
        op = generator_matrix(one_factor, 2)
        col = op.G[:, op.index[(0, 2)]].toarray().ravel()
        expect = np.zeros(op.size)
        expect[op.index[(1, 1)]] = 0.9625
        expect[op.index[(0, 2)]] = -2.6625
        np.testing.assert_allclose(col, expect, atol=1e-15)

    def test_constant_and_y(self, one_factor):
        op = generator_matrix(one_factor, 2)
        assert op.G[:, op.index[(0, 0)]].nnz == 0
        col = op.G[:, op.index[(1, 0)]].toarray().ravel()
        expect = np.zeros(op.size)
        expect[op.index[(0, 1)]] = -0.25
        np.testing.assert_array_equal(col, expect)

    def test_capacity(self, one_factor):
        with pytest.raises(CapacityError):
            generator_matrix(one_factor, 51)

    def test_degree_preserving(self, bombardier2):
        op = generator_matrix(bombardier2, 4)
        deg = np.array([sum(e) for e in op.basis])
        G = op.G.tocoo()
        assert np.all(deg[G.row] == deg[G.col])


class TestMoments:
    def test_constant(self, one_factor, s0):
        op = generator_matrix(one_factor, 3)
        for h in (0.0, 0.5, 7.0):
            assert moment(op, s0, {(0, 0): 1.0}, h) == 1.0

    def test_linear_matches_exponential(self, bombardier2):
        op = generator_matrix(bombardier2, 3)
        s = State(0.9, np.array([0.1, 0.3]))
        ref = expm_action(lhcc_to_lhc(bombardier2).drift_matrix(), 1.3, s.vector)
        mv = op.moment_vector(s, 1.3)
        got = [mv[op.index[e]] for e in [(1, 0, 0), (0, 1, 0), (0, 0, 1)]]
        np.testing.assert_allclose(got, ref, atol=1e-12)

    def test_degree_consistency(self, one_factor, s0):
        target = {(2, 1): 0.3, (0, 3): -1.0, (1, 0): 2.0}
        a = generator_matrix(one_factor, 3).moment(s0, target, 2.0)
        b = generator_matrix(one_factor, 5).moment(s0, target, 2.0)
        assert a == pytest.approx(b, abs=1e-10)

    def test_tower(self, bombardier2):
        op = generator_matrix(bombardier2, 4)
        s = State(1.0, np.array([0.2, 0.4]))
        target = {(0, 2, 2): 1.0, (1, 1, 0): -0.5}
        direct = op.moment(s, target, 1.7)
        coeffs = op.propagate(target, 0.6)
        assert op.moment(s, coeffs, 1.1) == pytest.approx(direct, abs=1e-10)

    def test_support_bound(self, bombardier2):
        op = generator_matrix(bombardier2, 6)
        s = State(0.8, np.array([0.8, 0.0]))
        mv = op.moment_vector(s, 3.0)
        assert mv.min() >= -1e-12 and mv.max() <= 1 + 1e-12

    def test_rejects_oversized_target(self, one_factor, s0):
        op = generator_matrix(one_factor, 2)
        with pytest.raises(InvalidInputError):
            op.moment(s0, {(0, 3): 1.0}, 1.0)


class TestOrthogonalBasis:
    @pytest.mark.parametrize("family", ["legendre", "chebyshev"])
    def test_matches_monomial(self, bombardier2, family):
        n = 5
        T = np.array([[2.0, 0, 0], [0.5, 3.0, 0], [0, 1.0, 2.5]])
        c = np.array([0.5, 0.1, 0.2])
        ortho = ortho_generator(bombardier2, n, T, c, family)
        mono = generator_matrix(bombardier2, n)
        s = State(0.9, np.array([0.3, 0.5]))
        got = ortho.expectations(s, 1.4)
        # rebuild two basis functions as monomial polynomials in (y, x1, x2)
        w = [poly_linear(T[q], -T[q] @ c) for q in range(3)]
        vander = {"legendre": L.leg2poly, "chebyshev": np.polynomial.chebyshev.cheb2poly}[family]
        for e in [(2, 1, 0), (0, 2, 3), (1, 1, 1)]:
            poly = {(0, 0, 0): 1.0}
            for q, k in enumerate(e):
                coef = vander(np.eye(k + 1)[k])
                pk = {(0, 0, 0): coef[0]}
                power = {(0, 0, 0): 1.0}
                for j in range(1, k + 1):
                    power = poly_mul(power, w[q])
                    for key, v in power.items():
                        pk[key] = pk.get(key, 0.0) + coef[j] * v
                poly = poly_mul(poly, pk)
            assert got[ortho.index[e]] == pytest.approx(mono.moment(s, poly, 1.4), abs=1e-12)
