"""Gamma, Bessel J and Jacobi polynomials, and the lower-bound witness.

The witness for the y-derivative is U_n(x, y) = y P_n^(omega, sigma)(1 - x).
Its Markov ratio ||dU_n/dy||_K / ||U_n||_{K_{1/n^2}} grows like n^2 / f'(1/n^2)
when omega is large enough relative to p and k.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import polybasis, quad
from .domain import CuspidalDomain, SubdomainSpec, f_prime

# Lanczos coefficients for g = 7, n = 9.
_LANCZOS_G = 7
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma(x):
    if not x > 0:
        raise ValueError(f"gamma is only provided for x > 0, got {x}")
    if x < 0.5:
        # Reflection keeps the series in its accurate range.
        return math.pi / (math.sin(math.pi * x) * gamma(1.0 - x))
    x -= 1.0
    acc = _LANCZOS[0]
    for i in range(1, _LANCZOS_G + 2):
        acc += _LANCZOS[i] / (x + i)
    t = x + _LANCZOS_G + 0.5
    return math.sqrt(2 * math.pi) * t ** (x + 0.5) * math.exp(-t) * acc


@dataclass
class BesselSeries:
    value: float
    remainder_bound: float
    terms: int


def _bessel_scaled_series(omega, z, max_terms=200):
    """sum_m (-1)^m (z/2)^(2m) / (m! Gamma(m + omega + 1))."""
    q = -(z / 2.0) ** 2
    term = 1.0 / gamma(omega + 1.0)
    total = term
    m = 0
    while m < max_terms:
        nxt = term * q / ((m + 1) * (m + 1 + omega))
        if abs(nxt) < 1e-16 * abs(total):
            return total, abs(nxt), m + 1
        total += nxt
        term = nxt
        m += 1
    return total, abs(term), m + 1


def bessel_j_series(omega, z) -> BesselSeries:
    """Power series for J_omega(z) on z in [0, 4] with its remainder bound.

    Once the terms decrease in magnitude the series alternates, so the first
    omitted term bounds the remainder.
    """
    if not omega >= 0:
        raise ValueError("omega must be >= 0")
    if not 0.0 <= z <= 4.0:
        raise ValueError(f"z={z} outside [0, 4]")
    scaled, rem, terms = _bessel_scaled_series(omega, z)
    lead = (z / 2.0) ** omega if (z > 0 or omega > 0) else 1.0
    return BesselSeries(lead * scaled, lead * rem, terms)


def bessel_j(omega, z):
    return bessel_j_series(omega, z).value


def bessel_j_scaled(omega, z):
    """(z/2)^(-omega) J_omega(z), finite at z = 0."""
    if not 0.0 <= z <= 4.0:
        raise ValueError(f"z={z} outside [0, 4]")
    return _bessel_scaled_series(omega, z)[0]


def jacobi_closed_form(omega, sigma, n, t):
    """Explicit P_n^(omega, sigma)(t) for n <= 2."""
    t = np.asarray(t, dtype=float)
    a, b = omega, sigma
    if n == 0:
        return np.ones_like(t)
    if n == 1:
        return (a - b) / 2 + (a + b + 2) * t / 2
    if n == 2:
        u = t - 1
        return (
            (a + 1) * (a + 2) / 2
            + (a + 2) * (a + b + 3) * u / 2
            + (a + b + 3) * (a + b + 4) * u**2 / 8
        )
    raise ValueError("closed forms are provided for n <= 2 only")


def jacobi_bound(omega, sigma, n):
    """max |P_n| on [-1, 1] when max(omega, sigma) >= -1/2."""
    q = max(omega, sigma)
    return math.exp(math.lgamma(n + q + 1) - math.lgamma(n + 1) - math.lgamma(q + 1))


def jacobi_eval(omega, sigma, n, t):
    """P_n^(omega, sigma)(t) by the three-term recurrence in n."""
    t = np.asarray(t, dtype=float)
    a, b = float(omega), float(sigma)
    p0 = np.ones_like(t)
    if n == 0:
        return p0
    p1 = (a - b) / 2 + (a + b + 2) * t / 2
    for m in range(2, n + 1):
        s = 2 * m + a + b
        c1 = 2 * m * (m + a + b) * (s - 2)
        c2 = (s - 1) * (a * a - b * b)
        c3 = (s - 2) * (s - 1) * s
        c4 = 2 * (m + a - 1) * (m + b - 1) * s
        p0, p1 = p1, ((c2 + c3 * t) * p1 - c4 * p0) / c1
    if max(a, b) >= -0.5 and np.all(np.abs(t) <= 1.0):
        bound = jacobi_bound(a, b, n)
        assert np.all(np.abs(p1) <= bound * (1 + 1e-9)), "Jacobi recurrence overflow guard"
    return p1


def _self_check():
    rng = np.random.default_rng(0)
    t = rng.uniform(-1, 1, 16)
    for a, b in ((0.5, 1.5), (7.0, 0.0), (3.25, 9.0)):
        for n in (1, 2):
            got = jacobi_eval(a, b, n, t)
            want = jacobi_closed_form(a, b, n, t)
            if not np.allclose(got, want, rtol=1e-12, atol=1e-12):
                raise RuntimeError("Jacobi recurrence disagrees with closed forms")


_self_check()


def admissible(omega, p, k):
    """omega p + p/2 - 2 > 2 k (p + 1), evaluated in exact rational arithmetic."""
    w, pp, kk = Fraction(omega), Fraction(p), Fraction(k)
    return w * pp + pp / 2 - 2 > 2 * kk * (pp + 1)


def default_omega(p, k, margin=1):
    """Smallest integer omega passing :func:`admissible`, plus ``margin``."""
    # omega > (2k(p+1) + 2 - p/2) / p
    threshold = (2 * Fraction(k) * (Fraction(p) + 1) + 2 - Fraction(p) / 2) / Fraction(p)
    omega = math.floor(threshold) + 1
    return omega + margin


@dataclass(frozen=True)
class WitnessSpec:
    omega: float
    sigma: float
    n: int
    p: float = 2.0

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if self.n < 1:
            raise ValueError("witness degree must be >= 1")
        if self.p < 1:
            raise ValueError("p must be >= 1")

    def is_admissible(self, k):
        return admissible(self.omega, self.p, k)


class WitnessFunction:
    """y^power P_n^(omega, sigma)(1 - x) evaluated by recurrence (any n)."""

    def __init__(self, spec: WitnessSpec, y_power=1):
        self.spec = spec
        self.y_power = y_power
        self.degrees = (spec.n, y_power, spec.n + y_power)

    def eval(self, x, y):
        s = self.spec
        vals = jacobi_eval(s.omega, s.sigma, s.n, 1.0 - np.asarray(x, dtype=float))
        if self.y_power:
            vals = vals * np.asarray(y, dtype=float) ** self.y_power
        return vals


def jacobi_shifted_legendre(spec: WitnessSpec):
    """Legendre coefficients in u = 2x - 1 of x -> P_n(1 - x)."""
    n = spec.n
    g, w = np.polynomial.legendre.leggauss(n + 1)
    vals = jacobi_eval(spec.omega, spec.sigma, n, (1.0 - g) / 2.0)
    V = np.polynomial.legendre.legvander(g, n)
    return (V * w[:, None]).T @ vals * (2 * np.arange(n + 1) + 1) / 2


def witness_poly(spec: WitnessSpec, d: CuspidalDomain) -> polybasis.Poly2:
    degree = spec.n + 1
    polybasis.check_degree(degree)
    y_max = d.y_max
    cx = jacobi_shifted_legendre(spec)
    c = np.zeros(polybasis.basis_size(degree))
    # y = y_max (v + 1) / 2 = (y_max / 2) L_0(v) + (y_max / 2) L_1(v)
    for i, ci in enumerate(cx):
        c[polybasis.position(i, 0)] += ci * y_max / 2
        c[polybasis.position(i, 1)] += ci * y_max / 2
    return polybasis.Poly2(degree, c, y_max)


def witness_ratio(spec: WitnessSpec, d: CuspidalDomain, q: quad.QuadSpec = quad.DEFAULT_QUAD):
    """(rho, normalized) for U_n.

    rho = ||dU_n/dy||_{L_p(K)} / ||U_n||_{L_p(K_{1/n^2})} and
    normalized = rho f'(1/n^2) / n^2.
    """
    if not spec.is_admissible(d.k):
        warnings.warn(
            f"(omega={spec.omega}, p={spec.p}, k={d.k}) is not admissible; "
            "the witness lower bound is not guaranteed",
            stacklevel=2,
        )
    n = spec.n
    dU = WitnessFunction(spec, y_power=0)
    U = WitnessFunction(spec, y_power=1)
    num = quad.lp_norm(dU, d, SubdomainSpec(0.0), spec.p, q)
    den = quad.lp_norm(U, d, SubdomainSpec(1.0 / n**2), spec.p, q)
    if not (den > 0 and np.isfinite(num)):
        raise RuntimeError(f"witness norms degenerate at n={n}: {num}, {den}")
    rho = num / den
    eta = f_prime(d, 1.0 / n**2)
    return rho, rho * eta / n**2


def mehler_heine_gap(omega, n, z, sigma=0.0):
    """|n^(-omega) P_n(cos(z/n)) - (z/2)^(-omega) J_omega(z)|.

    The Jacobi side converges to the Bessel side as n grows.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 < z <= 2.0:
        raise ValueError("z must lie in (0, 2]")
    jac = float(jacobi_eval(omega, sigma, n, math.cos(z / n))) / n**omega
    return abs(jac - bessel_j_scaled(omega, z))


def _golden_min(fn, lo, hi, tol=1e-12):
    inv = (math.sqrt(5) - 1) / 2
    c = hi - inv * (hi - lo)
    d = lo + inv * (hi - lo)
    fc, fd = fn(c), fn(d)
    while hi - lo > tol:
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - inv * (hi - lo)
            fc = fn(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + inv * (hi - lo)
            fd = fn(d)
    z = (lo + hi) / 2
    return z, fn(z)


def bessel_min_bound(omega):
    """Check min_{[0,2]} (z/2)^(-omega) J_omega(z) >= omega / Gamma(omega + 2).

    Returns (min_val, bound, ok).
    """
    if not omega > 0:
        raise ValueError("omega must be positive")
    fn = lambda z: bessel_j_scaled(omega, z)  # noqa: E731
    grid = np.linspace(0.0, 2.0, 10_000)
    vals = np.array([fn(z) for z in grid])
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    _, refined = _golden_min(fn, lo, hi)
    min_val = float(min(vals[i], refined, fn(lo), fn(hi)))
    bound = omega / gamma(omega + 2.0)
    return min_val, bound, min_val >= bound - 1e-10
