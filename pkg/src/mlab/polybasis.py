"""Bivariate polynomials of bounded total degree and their Gram matrices.

Polynomials are stored in the tensor basis L_i(2x - 1) L_j(2y / y_max - 1)
of shifted Legendre polynomials on the bounding box [0, 1] x [0, y_max],
restricted to i + j <= n.  Basis elements are ordered by total degree, so
the degree-m space is a prefix of the degree-n coefficient vector for any
m <= n.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from numpy.polynomial import legendre as leg
from numpy.polynomial import polynomial as poly
from scipy.linalg import solve_triangular

from . import quad
from .domain import CuspidalDomain, SubdomainSpec
from .errors import ConditioningError

DEGREE_CAP = 16
CHOLESKY_CONDITION_CAP = 1e12
# The QR route never forms G; its working matrix is the weighted Vandermonde
# whose condition is sqrt(cond G).  Capping cond(G) at 1e30 keeps that factor
# below 1e15.
QR_CONDITION_CAP = 1e30


class Axis(str, enum.Enum):
    X = "X"
    Y = "Y"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).upper())


def basis_size(n):
    return (n + 1) * (n + 2) // 2


@lru_cache(maxsize=None)
def basis_index(n):
    """(i, j) exponent pairs in graded order: degree 0, then 1, ..."""
    pairs = [(d - j, j) for d in range(n + 1) for j in range(d + 1)]
    i = np.array([p[0] for p in pairs], dtype=int)
    j = np.array([p[1] for p in pairs], dtype=int)
    i.setflags(write=False)
    j.setflags(write=False)
    return i, j


def position(i, j):
    d = i + j
    return basis_size(d - 1) + j if d > 0 else 0


def check_degree(n, cap=DEGREE_CAP):
    if n > cap:
        raise ConditioningError(f"degree {n} exceeds the degree cap {cap}", degree=n)


def vandermonde(x, y, n, y_max):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lu = leg.legvander(2.0 * x - 1.0, n)
    lv = leg.legvander(2.0 * y / y_max - 1.0, n)
    i, j = basis_index(n)
    return lu[..., i] * lv[..., j]


@dataclass(frozen=True, eq=False)
class Poly2:
    degree: int
    coeffs: np.ndarray
    y_max: float

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.shape != (basis_size(self.degree),):
            raise ValueError(
                f"expected {basis_size(self.degree)} coefficients for degree "
                f"{self.degree}, got shape {c.shape}"
            )
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zero(cls, degree, y_max):
        return cls(degree, np.zeros(basis_size(degree)), y_max)

    @classmethod
    def constant(cls, value, y_max, degree=0):
        c = np.zeros(basis_size(degree))
        c[0] = value
        return cls(degree, c, y_max)

    @property
    def degrees(self):
        """(degree in x, degree in y, total degree) bounds."""
        n = self.effective_degree
        return (n, n, n)

    @property
    def effective_degree(self):
        nz = np.nonzero(self.coeffs)[0]
        if nz.size == 0:
            return 0
        i, j = basis_index(self.degree)
        return int(i[nz[-1]] + j[nz[-1]])

    @property
    def coeff_matrix(self):
        """Coefficients arranged as C[i, j] for L_i(u) L_j(v)."""
        n = self.degree
        C = np.zeros((n + 1, n + 1))
        i, j = basis_index(n)
        C[i, j] = self.coeffs
        return C

    def eval(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        lu = leg.legvander(2.0 * x.ravel() - 1.0, self.degree)
        lv = leg.legvander(2.0 * y.ravel() / self.y_max - 1.0, self.degree)
        return np.einsum("ni,ni->n", lu @ self.coeff_matrix, lv).reshape(x.shape)

    def __call__(self, x, y):
        return self.eval(x, y)

    def scaled(self, c):
        return Poly2(self.degree, c * self.coeffs, self.y_max)

    def raised(self, degree):
        """The same polynomial declared at a higher degree."""
        if degree < self.degree:
            raise ValueError("cannot lower the declared degree")
        c = np.zeros(basis_size(degree))
        c[: self.coeffs.size] = self.coeffs
        return Poly2(degree, c, self.y_max)

    def __add__(self, other):
        n = max(self.degree, other.degree)
        return Poly2(n, self.raised(n).coeffs + other.raised(n).coeffs, self.y_max)


def _shifted_power_legendre(power, scale):
    """Legendre coefficients in t of (scale * (t + 1) / 2) ** power."""
    base = poly.polypow([scale / 2.0, scale / 2.0], power)
    return leg.poly2leg(base)


def from_monomials(coeffs, domain_or_ymax, degree=None) -> Poly2:
    """Convert {(i, j): c} meaning sum c x^i y^j into the Legendre basis."""
    y_max = (
        domain_or_ymax.y_max
        if isinstance(domain_or_ymax, CuspidalDomain)
        else float(domain_or_ymax)
    )
    top = max((i + j for i, j in coeffs), default=0)
    n = top if degree is None else degree
    if top > n:
        raise ValueError(f"monomial degree {top} exceeds declared degree {n}")
    check_degree(n)
    out = np.zeros(basis_size(n))
    for (i, j), c in coeffs.items():
        cx = _shifted_power_legendre(i, 1.0)
        cy = _shifted_power_legendre(j, y_max)
        for a, ca in enumerate(cx):
            for b, cb in enumerate(cy):
                out[position(a, b)] += c * ca * cb
    return Poly2(n, out, y_max)


@dataclass(frozen=True, eq=False)
class DiffOperator:
    axis: Axis
    degree: int
    matrix: np.ndarray


@lru_cache(maxsize=128)
def _diff_matrix(n, axis, y_max):
    m = basis_size(n)
    D = np.zeros((m, m))
    i_idx, j_idx = basis_index(n)
    for col in range(m):
        i, j = int(i_idx[col]), int(j_idx[col])
        if axis is Axis.X:
            if i == 0:
                continue
            der = leg.legder(np.eye(i + 1)[i]) * 2.0
            for a, v in enumerate(der):
                D[position(a, j), col] += v
        else:
            if j == 0:
                continue
            der = leg.legder(np.eye(j + 1)[j]) * (2.0 / y_max)
            for b, v in enumerate(der):
                D[position(i, b), col] += v
    D.setflags(write=False)
    return D


def diff_operator(degree, axis, y_max) -> DiffOperator:
    axis = Axis.parse(axis)
    return DiffOperator(axis, degree, _diff_matrix(degree, axis, float(y_max)))


def differentiate(P: Poly2, axis) -> Poly2:
    D = diff_operator(P.degree, axis, P.y_max).matrix
    n_out = max(P.degree - 1, 0)
    c = (D @ P.coeffs)[: basis_size(n_out)]
    return Poly2(n_out, c, P.y_max)


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """L2 Gram matrix of the degree-n basis over K_{x_lo}.

    ``root`` is an upper-triangular R with G = R^T R computed by QR of the
    quadrature-weighted Vandermonde; it is what the eigen routes factor.
    """

    degree: int
    entries: np.ndarray
    x_lo: float
    y_max: float
    root: Optional[np.ndarray] = None

    def leading(self, n) -> "GramMatrix":
        if n > self.degree:
            raise ValueError("leading block larger than the matrix")
        m = basis_size(n)
        root = None if self.root is None else self.root[:m, :m]
        return GramMatrix(n, self.entries[:m, :m], self.x_lo, self.y_max, root)


def _tsqr_root(blocks):
    rs = [np.linalg.qr(b, mode="r") for b in blocks if b.shape[0]]
    R = np.linalg.qr(np.vstack(rs), mode="r")
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return R * signs[:, None]


@lru_cache(maxsize=64)
def _gram_cached(domain, x_lo, degree, q):
    m = basis_size(degree)
    y_max = domain.y_max
    if x_lo >= 1.0:
        return GramMatrix(degree, np.zeros((m, m)), x_lo, y_max, np.zeros((m, m)))
    ms = quad.s_order(domain.k, 2, degree, q.base_gauss_order)
    mx = quad.x_order(domain.k, 2, (degree, degree, degree), q.x_gauss_order)
    blocks = []
    partial = []
    for x, y, w in quad.tensor_rule(domain, x_lo, ms, mx, q):
        B = np.sqrt(w)[:, None] * vandermonde(x, y, degree, y_max)
        blocks.append(B)
        partial.append(B.T @ B)
    G = quad.pairwise_sum(partial)
    G = (G + G.T) / 2
    G.setflags(write=False)
    R = _tsqr_root(blocks)
    R.setflags(write=False)
    return GramMatrix(degree, G, x_lo, y_max, R)


def gram(domain: CuspidalDomain, sub, degree, q: quad.QuadSpec = quad.DEFAULT_QUAD) -> GramMatrix:
    check_degree(degree)
    x_lo = sub.x_lo if isinstance(sub, SubdomainSpec) else float(SubdomainSpec(sub).x_lo)
    return _gram_cached(domain, float(x_lo), int(degree), q)


@dataclass(frozen=True, eq=False)
class BasisTransform:
    """Upper-triangular T with T^T G T = I."""

    T: np.ndarray
    R: np.ndarray
    condition: float
    degree: Optional[int]
    route: str


def _condition_of_root(R):
    sv = np.linalg.svd(R, compute_uv=False)
    if sv[-1] == 0:
        return np.inf
    return float((sv[0] / sv[-1]) ** 2)


def _first_bad_degree(R, degree, cap):
    if degree is None:
        return None
    for n in range(degree + 1):
        m = basis_size(n)
        if _condition_of_root(R[:m, :m]) > cap:
            return n
    return degree


def orthonormalize(G, max_condition=None) -> BasisTransform:
    """Triangular factor T such that T^T G T = I.

    ``G`` is a :class:`GramMatrix` or a plain symmetric positive definite
    array.  A GramMatrix with a QR root is factored through that root;
    otherwise G is Cholesky-factored.  The condition estimate is cond(G) in
    both cases and is checked against ``max_condition``.
    """
    degree = None
    if isinstance(G, GramMatrix):
        degree = G.degree
        R = G.root
        entries = G.entries
    else:
        R = None
        entries = np.asarray(G, dtype=float)
    if R is not None:
        route = "qr"
        cap = QR_CONDITION_CAP if max_condition is None else max_condition
    else:
        route = "cholesky"
        cap = CHOLESKY_CONDITION_CAP if max_condition is None else max_condition
        try:
            R = np.linalg.cholesky(entries).T
        except np.linalg.LinAlgError:
            raise ConditioningError(
                f"Gram matrix of degree {degree} is not numerically positive definite",
                degree=degree,
                condition=np.inf,
            ) from None
    cond = _condition_of_root(R)
    if cond > cap:
        bad = _first_bad_degree(R, degree, cap)
        raise ConditioningError(
            f"condition estimate {cond:.3g} exceeds cap {cap:.3g}"
            + (f" (first reached at degree {bad})" if bad is not None else ""),
            degree=bad,
            condition=cond,
        )
    T = solve_triangular(R, np.eye(R.shape[0]), lower=False)
    return BasisTransform(T, R, cond, degree, route)

