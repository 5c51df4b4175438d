"""Conditional moments of LHC diffusions through the polynomial generator.

The generator of an LHC model maps polynomials of degree ``d`` in
``(y, x_1, ..., x_m)`` to polynomials of degree ``d``, and in fact maps
homogeneous polynomials to homogeneous polynomials of the same degree.
Writing ``G`` for its matrix on the monomial basis,

    E[p(Y_{t+h}, X_{t+h}) | Y_t = y, X_t = x] = H(y, x)^T e^{G h} p,

with ``H`` the vector of basis monomials and ``p`` the coordinates of the
polynomial.  Because ``G`` is block diagonal by total degree, exponentials
are taken block by block.

Polynomials are passed around as ``dict`` mapping exponent tuples
``(a_0, a_1, ..., a_m)`` (``a_0`` on ``y``) to coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from math import comb

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from ._validation import check_scalar, check_vector
from .exceptions import CapacityError, InvalidInputError
from .model import LhcParams, LhccParams, State, lhcc_to_lhc

__all__ = [
    "DEFAULT_MAX_DEGREE",
    "DENSE_BLOCK_LIMIT",
    "basis_size",
    "enumerate_basis",
    "MomentOperator",
    "generator_matrix",
    "moment",
    "Poly",
    "poly_add",
    "poly_scale",
    "poly_mul",
    "poly_pow",
    "poly_linear",
    "poly_degree",
    "poly_eval",
    "monomial",
    "OrthoMomentOperator",
    "ortho_generator",
]

#: Largest total degree accepted by :func:`generator_matrix` unless overridden.
DEFAULT_MAX_DEGREE = 50
#: Degree blocks larger than this are propagated with ``expm_multiply``.
DENSE_BLOCK_LIMIT = 512
#: Hard cap on the basis dimension, to keep memory bounded.
MAX_BASIS = 400_000

Poly = dict


def basis_size(m: int, n: int) -> int:
    """Number of monomials of degree at most ``n`` in ``1 + m`` variables."""
    return comb(n + 1 + m, n)


def _degree_block(m: int, d: int) -> list[tuple]:
    out = []
    for combo in combinations_with_replacement(range(m + 1), d):
        e = [0] * (m + 1)
        for v in combo:
            e[v] += 1
        out.append(tuple(e))
    return out


def enumerate_basis(m: int, n: int) -> list[tuple]:
    """Graded-lexicographic monomial basis of degree at most ``n``.

    Within each degree the order follows ``combinations_with_replacement``
    over the variables ``(y, x_1, ..., x_m)``, giving
    ``1, y, x_1, ..., x_m, y^2, y x_1, ..., x_1^2, x_1 x_2, ...``.

    Returns
    -------
    list of tuple
        Exponent tuples ``(a_0, a_1, ..., a_m)``.
    """
    if m < 0 or n < 0:
        raise InvalidInputError("m and n must be non-negative")
    out = []
    for d in range(n + 1):
        out.extend(_degree_block(m, d))
    return out


# ---------------------------------------------------------------- polynomials

def monomial(exps, coef: float = 1.0) -> Poly:
    return {tuple(int(e) for e in exps): float(coef)}


def poly_add(*polys: Poly) -> Poly:
    out: Poly = {}
    for p in polys:
        for k, v in p.items():
            out[k] = out.get(k, 0.0) + v
    return out


def poly_scale(p: Poly, s: float) -> Poly:
    return {k: v * s for k, v in p.items()}


def poly_mul(p: Poly, q: Poly) -> Poly:
    out: Poly = {}
    for k1, v1 in p.items():
        for k2, v2 in q.items():
            k = tuple(a + b for a, b in zip(k1, k2))
            out[k] = out.get(k, 0.0) + v1 * v2
    return out


def poly_pow(p: Poly, k: int, nvars: int) -> Poly:
    out: Poly = {(0,) * nvars: 1.0}
    for _ in range(k):
        out = poly_mul(out, p)
    return out


def poly_linear(coefs, const: float = 0.0) -> Poly:
    """Affine polynomial ``const + sum_k coefs[k] v_k`` in the variables ``(y, x...)``."""
    coefs = np.asarray(coefs, dtype=float)
    nv = coefs.shape[0]
    out: Poly = {}
    if const != 0.0:
        out[(0,) * nv] = float(const)
    for k in range(nv):
        if coefs[k] != 0.0:
            e = [0] * nv
            e[k] = 1
            out[tuple(e)] = float(coefs[k])
    return out


def poly_degree(p: Poly) -> int:
    return max((sum(k) for k, v in p.items() if v != 0.0), default=0)


def poly_eval(p: Poly, v) -> float:
    v = np.asarray(v, dtype=float)
    return float(sum(c * np.prod(v ** np.asarray(k)) for k, c in p.items()))


# ---------------------------------------------------------------- generator

def _generator_column(alpha: tuple, gamma, b, beta, half_s2) -> dict:
    m = len(alpha) - 1
    col: dict = {}

    def add(e, val):
        if val != 0.0:
            e = tuple(e)
            col[e] = col.get(e, 0.0) + val

    a0 = alpha[0]
    if a0 > 0:
        for j in range(m):
            e = list(alpha)
            e[0] -= 1
            e[1 + j] += 1
            add(e, -a0 * gamma[j])
    for i in range(m):
        ai = alpha[1 + i]
        if ai == 0:
            continue
        e = list(alpha)
        e[1 + i] -= 1
        e[0] += 1
        add(e, ai * b[i] + half_s2[i] * ai * (ai - 1))
        add(alpha, -half_s2[i] * ai * (ai - 1))
        for j in range(m):
            e = list(alpha)
            e[1 + i] -= 1
            e[1 + j] += 1
            add(e, ai * beta[i, j])
    return col


@dataclass(frozen=True)
class MomentOperator:
    """Generator matrix of an LHC model on the monomials of degree at most ``degree``.

    Attributes
    ----------
    params : LhcParams
    degree : int
    basis : tuple of tuple
        Exponent tuples in graded-lex order.
    index : dict
        Exponent tuple to position in ``basis``.
    G : scipy.sparse.csr_matrix
        Column ``k`` holds the coordinates of the generator applied to ``basis[k]``.
    blocks : tuple of slice
        ``blocks[d]`` selects the monomials of total degree ``d``.
    """

    params: LhcParams
    degree: int
    basis: tuple
    index: dict = field(repr=False)
    G: sp.csr_matrix = field(repr=False)
    blocks: tuple = field(repr=False)
    _dense: tuple = field(repr=False, default=())

    @property
    def m(self) -> int:
        return self.params.m

    @property
    def size(self) -> int:
        return len(self.basis)

    def H(self, s) -> np.ndarray:
        """Basis monomials evaluated at a state (``State`` or stacked vector)."""
        v = s.vector if isinstance(s, State) else check_vector(s, "state", self.m + 1)
        E = np.asarray(self.basis, dtype=float)
        with np.errstate(invalid="ignore"):
            out = np.prod(np.where(E == 0, 1.0, v[None, :] ** E), axis=1)
        return out

    def H_many(self, V) -> np.ndarray:
        """Basis monomials at many states, shape ``(n_states, size)``."""
        V = np.atleast_2d(np.asarray(V, dtype=float))
        E = np.asarray(self.basis, dtype=int)
        out = np.ones((V.shape[0], len(self.basis)))
        for k in range(V.shape[1]):
            powk = np.ones((V.shape[0], self.degree + 1))
            for d in range(1, self.degree + 1):
                powk[:, d] = powk[:, d - 1] * V[:, k]
            out *= powk[:, E[:, k]]
        return out

    def to_vector(self, p: Poly) -> np.ndarray:
        """Coordinates of a polynomial in the basis."""
        out = np.zeros(self.size)
        for k, v in p.items():
            k = tuple(k)
            if len(k) != self.m + 1:
                raise InvalidInputError(f"exponent {k} has wrong length for m={self.m}")
            if sum(k) > self.degree:
                if v == 0.0:
                    continue
                raise InvalidInputError(f"monomial {k} exceeds operator degree {self.degree}")
            out[self.index[k]] += v
        return out

    def _block_exp(self, d: int, h: float, transpose: bool, v: np.ndarray) -> np.ndarray:
        sl = self.blocks[d]
        size = sl.stop - sl.start
        if size > DENSE_BLOCK_LIMIT:
            B = self.G[sl, sl]
            B = B.T if transpose else B
            return expm_multiply(B.tocsr() * h, v)
        B = self._dense[d]
        E = sla.expm((B.T if transpose else B) * h)
        return E @ v

    def propagate(self, p, h: float) -> np.ndarray:
        """Coordinates of ``x -> E[p(X_h) | X_0 = x]``, i.e. ``e^{G h} p``."""
        h = check_scalar(h, "h", lo=0.0)
        vec = self.to_vector(p) if isinstance(p, dict) else check_vector(p, "p", self.size)
        out = np.array(vec, dtype=float)
        if h == 0.0:
            return out
        for d, sl in enumerate(self.blocks):
            if np.any(out[sl] != 0.0):
                out[sl] = self._block_exp(d, h, False, out[sl])
        return out

    def moment_vector(self, s, h: float) -> np.ndarray:
        """Conditional expectations of every basis monomial, ``e^{G^T h} H(s)``."""
        h = check_scalar(h, "h", lo=0.0)
        Hs = self.H(s)
        if h == 0.0:
            return Hs
        out = np.empty_like(Hs)
        for d, sl in enumerate(self.blocks):
            out[sl] = self._block_exp(d, h, True, Hs[sl])
        return out

    def moment(self, s, target, h: float) -> float:
        """``E[target(Y_h, X_h) | (Y_0, X_0) = s]``."""
        vec = self.to_vector(target) if isinstance(target, dict) else check_vector(target, "target", self.size)
        return float(self.moment_vector(s, h) @ vec)


def generator_matrix(p, n: int, max_degree: int = DEFAULT_MAX_DEGREE) -> MomentOperator:
    """Assemble the generator on monomials of degree at most ``n``.

    Parameters
    ----------
    p : LhcParams or LhccParams
    n : int
        Maximal total degree.
    max_degree : int
        Capacity limit; larger ``n`` raises :class:`CapacityError`.
    """
    if isinstance(p, LhccParams):
        p = lhcc_to_lhc(p, check=False)
    if not isinstance(p, LhcParams):
        raise InvalidInputError("generator_matrix needs LHC parameters")
    n = int(n)
    if n < 0:
        raise InvalidInputError("degree must be non-negative")
    if n > max_degree:
        raise CapacityError(f"moment degree {n} exceeds the configured limit {max_degree}")
    m = p.m
    N = basis_size(m, n)
    if N > MAX_BASIS:
        raise CapacityError(f"basis dimension {N} exceeds {MAX_BASIS}")
    basis = enumerate_basis(m, n)
    index = {e: k for k, e in enumerate(basis)}
    half_s2 = 0.5 * p.sigma**2
    rows, cols, vals = [], [], []
    for k, alpha in enumerate(basis):
        for e, v in _generator_column(alpha, p.gamma, p.b, p.beta, half_s2).items():
            rows.append(index[e])
            cols.append(k)
            vals.append(v)
    G = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))
    blocks, start = [], 0
    for d in range(n + 1):
        size = comb(d + m, m)
        blocks.append(slice(start, start + size))
        start += size
    dense = tuple(
        G[sl, sl].toarray() if (sl.stop - sl.start) <= DENSE_BLOCK_LIMIT else None for sl in blocks
    )
    return MomentOperator(p, n, tuple(basis), index, G, tuple(blocks), dense)


def moment(op: MomentOperator, s, target, h: float) -> float:
    """Functional alias of :meth:`MomentOperator.moment`."""
    return op.moment(s, target, h)


# ---------------------------------------------------------------- orthogonal bases

_FAMILIES = {
    "legendre": (np.polynomial.legendre.legder, np.polynomial.legendre.legmulx, np.polynomial.legendre.legvander),
    "chebyshev": (np.polynomial.chebyshev.chebder, np.polynomial.chebyshev.chebmulx, np.polynomial.chebyshev.chebvander),
}


def _one_dim_ops(family: str, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Differentiation and multiplication-by-``w`` matrices on degree ``<= n`` coefficients."""
    der, mulx, _ = _FAMILIES[family]
    D = np.zeros((n + 1, n + 1))
    X = np.zeros((n + 1, n + 1))
    for k in range(n + 1):
        e = np.zeros(n + 1)
        e[k] = 1.0
        d = der(e)
        D[: d.shape[0], k] = d
        x = mulx(e)[: n + 1]
        # the degree n + 1 component is never reached from a total-degree <= n input
        X[: x.shape[0], k] = x
    return D, X


def _axis_op(A1: np.ndarray, axis: int, nvars: int) -> sp.csr_matrix:
    n1 = A1.shape[0]
    out = sp.identity(1, format="csr")
    for q in range(nvars):
        out = sp.kron(out, sp.csr_matrix(A1) if q == axis else sp.identity(n1, format="csr"), format="csr")
    return out


@dataclass(frozen=True)
class OrthoMomentOperator:
    """Generator of an LHC model on a tensor orthogonal basis in affine coordinates.

    Coordinates are ``w = T (v - c)`` with ``v = (y, x)``; the basis is
    ``prod_q P_{alpha_q}(w_q)`` over total degree ``<= degree`` with ``P``
    Legendre or Chebyshev polynomials.  When ``w`` ranges over a box of
    size one, basis functions stay bounded by one and expectations of
    high-order polynomials avoid the cancellation of monomial expansions.

    Attributes
    ----------
    params : LhcParams
    degree : int
    family : {"legendre", "chebyshev"}
    T, c : ndarray
    basis : tuple of tuple
    G : ndarray or sparse matrix
        Column ``k`` holds the coordinates of the generator applied to basis element ``k``.
    """

    params: LhcParams
    degree: int
    family: str
    T: np.ndarray
    c: np.ndarray
    basis: tuple
    index: dict = field(repr=False)
    G: object = field(repr=False)

    def coords(self, s) -> np.ndarray:
        v = s.vector if isinstance(s, State) else check_vector(s, "state", self.params.m + 1)
        return self.T @ (v - self.c)

    def values(self, s) -> np.ndarray:
        """Basis functions evaluated at a state."""
        w = self.coords(s)
        vander = _FAMILIES[self.family][2]
        V = [vander(np.array([wq]), self.degree)[0] for wq in w]
        E = np.asarray(self.basis, dtype=int)
        out = np.ones(E.shape[0])
        for q, Vq in enumerate(V):
            out *= Vq[E[:, q]]
        return out

    def expectations(self, s, h: float) -> np.ndarray:
        """``E[basis_k(W_h) | W_0 = w(s)]`` for every basis element."""
        h = check_scalar(h, "h", lo=0.0)
        b = self.values(s)
        if h == 0.0:
            return b
        if isinstance(self.G, np.ndarray):
            return sla.expm(self.G.T * h) @ b
        return expm_multiply(self.G.T.tocsr() * h, b)


def ortho_generator(p, n: int, T, c, family: str = "legendre", max_degree: int = 2 * DEFAULT_MAX_DEGREE) -> OrthoMomentOperator:
    """Assemble the generator on a tensor orthogonal basis of total degree ``<= n``.

    Parameters
    ----------
    p : LhcParams or LhccParams
    n : int
    T : array_like, shape (m + 1, m + 1)
        Invertible map to the coordinates ``w = T (v - c)``.
    c : array_like, shape (m + 1,)
    family : {"legendre", "chebyshev"}
    """
    if isinstance(p, LhccParams):
        p = lhcc_to_lhc(p, check=False)
    if family not in _FAMILIES:
        raise InvalidInputError(f"unknown polynomial family {family!r}")
    n = int(n)
    if n < 0:
        raise InvalidInputError("degree must be non-negative")
    if n > max_degree:
        raise CapacityError(f"moment degree {n} exceeds the configured limit {max_degree}")
    m = p.m
    nv = m + 1
    if basis_size(m, n) > MAX_BASIS or (n + 1) ** nv > 4 * MAX_BASIS:
        raise CapacityError("orthogonal basis too large")
    T = np.asarray(T, dtype=float).reshape(nv, nv)
    c = check_vector(c, "c", nv)
    if np.linalg.cond(T) > 1e12:
        raise InvalidInputError("coordinate map is singular")
    R = np.linalg.inv(T)
    A = p.drift_matrix(0.0)
    M = T @ A @ R
    mu0 = T @ A @ c
    D1, X1 = _one_dim_ops(family, n)
    D = [_axis_op(D1, q, nv) for q in range(nv)]
    X = [_axis_op(X1, q, nv) for q in range(nv)]
    size = (n + 1) ** nv
    I = sp.identity(size, format="csr")

    def affine(const, lin):
        out = const * I
        for q in range(nv):
            if lin[q] != 0.0:
                out = out + lin[q] * X[q]
        return out

    Gf = sp.csr_matrix((size, size))
    for i in range(nv):
        Gf = Gf + affine(mu0[i], M[i]) @ D[i]
    # v_k = c_k + R[k] w; diffusion of x_k is sigma_k^2 x_k (y - x_k)
    for k in range(m):
        s2 = p.sigma[k] ** 2
        if s2 == 0.0:
            continue
        xk = (c[1 + k], R[1 + k])
        gap = (c[0] - c[1 + k], R[0] - R[1 + k])
        q_op = affine(*xk) @ affine(*gap)
        for i in range(nv):
            for j in range(nv):
                coef = 0.5 * s2 * T[i, 1 + k] * T[j, 1 + k]
                if coef != 0.0:
                    Gf = Gf + coef * (q_op @ (D[i] @ D[j]))
    basis = enumerate_basis(m, n)
    flat = np.ravel_multi_index(np.asarray(basis).T, (n + 1,) * nv)
    G = Gf[flat][:, flat]
    leak = abs(Gf[:, flat]).sum() - abs(G).sum()
    if leak > 1e-8 * max(1.0, abs(G).sum()):
        raise InvalidInputError("generator leaves the total-degree space")  # pragma: no cover
    G = G.toarray() if len(basis) <= 2000 else G.tocsr()
    index = {e: k for k, e in enumerate(basis)}
    return OrthoMomentOperator(p, n, family, T, c, tuple(basis), index, G)
