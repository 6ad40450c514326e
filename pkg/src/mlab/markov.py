"""Per-degree Markov factors, Remez ratios and empirical exponents.

For p = 2 the factor sup ||dP|| / ||P|| over degree-n polynomials is the
square root of the largest eigenvalue of the pencil (D^T G D, G).  With
G = R^T R and T = R^{-1} this is the largest eigenvalue of the ordinary
symmetric matrix (R D T)^T (R D T).
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import polybasis, quad, specfun
from .domain import CuspidalDomain, SubdomainSpec
from .errors import InsufficientDataError, MlabError
from .polybasis import Axis, Poly2, diff_operator, gram, orthonormalize

FULL = SubdomainSpec(0.0)


class SeriesKind(str, enum.Enum):
    MARKOV_X = "MarkovX"
    MARKOV_Y = "MarkovY"
    REMEZ = "Remez"

    @property
    def axis(self):
        return {"MarkovX": Axis.X, "MarkovY": Axis.Y}.get(self.value)


class Method(str, enum.Enum):
    EXACT = "exact-eigen"
    SEARCH = "search"
    WITNESS = "witness"


def _top_eig(B):
    A = B.T @ B
    A = (A + A.T) / 2
    lam, vec = np.linalg.eigh(A)
    return math.sqrt(max(lam[-1], 0.0)), vec[:, -1]


def _factor_from_gram(G, n, axis):
    Gn = G.leading(n)
    bt = orthonormalize(Gn)
    D = diff_operator(n, axis, G.y_max).matrix
    val, u = _top_eig(bt.R @ D @ bt.T)
    return val, bt.T @ u


def markov_factor_p2(d: CuspidalDomain, n, axis, q: quad.QuadSpec = quad.DEFAULT_QUAD):
    """sup over nonzero P of degree <= n of ||dP/d axis||_2 / ||P||_2 on K."""
    if n == 0:
        return 0.0
    return _factor_from_gram(gram(d, FULL, n, q), n, Axis.parse(axis))[0]


def extremal_p2(d: CuspidalDomain, n, axis, q: quad.QuadSpec = quad.DEFAULT_QUAD):
    """(factor, maximising polynomial normalised to unit L2(K) norm)."""
    G = gram(d, FULL, n, q)
    val, c = _factor_from_gram(G, n, Axis.parse(axis))
    return val, Poly2(n, c, G.y_max)


class _Objective:
    """L_p Markov ratio as a function of coordinates in an L2(K)-orthonormal basis."""

    def __init__(self, d, n, p, axis, q):
        G = gram(d, FULL, n, q)
        bt = orthonormalize(G)
        D = diff_operator(n, axis, G.y_max).matrix
        self.R, self.T = bt.R, bt.T
        self.p = p
        if p == 2:
            # ||P||_2 = |u| exactly, ||dP||_2 = |B u|.
            self.B = bt.R @ D @ bt.T
        else:
            rule = quad.rule_for(d, _DegreeProbe(n), p, 0.0, q)
            x = np.concatenate([r[0] for r in rule])
            y = np.concatenate([r[1] for r in rule])
            self.w = np.concatenate([r[2] for r in rule])
            V = polybasis.vandermonde(x, y, n, G.y_max)
            self.phi = V @ bt.T
            self.phi_d = V @ (D @ bt.T)

    def coords(self, P: Poly2):
        return self.R @ P.coeffs

    def __call__(self, U):
        U = np.atleast_2d(U.T).T if U.ndim == 1 else U
        if self.p == 2:
            num = np.linalg.norm(self.B @ U, axis=0)
            den = np.linalg.norm(U, axis=0)
        else:
            num = (self.w @ np.abs(self.phi_d @ U) ** self.p) ** (1 / self.p)
            den = (self.w @ np.abs(self.phi @ U) ** self.p) ** (1 / self.p)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(den > 0, num / den, 0.0)
        return out


class _DegreeProbe:
    def __init__(self, n):
        self.degrees = (n, n, n)


def markov_factor_search(
    d: CuspidalDomain,
    n,
    p,
    axis,
    budget=10_000,
    seed=0,
    q: quad.QuadSpec = quad.DEFAULT_QUAD,
    seeds=(),
):
    """Lower bound on the L_p Markov factor by seeded search.

    Random directions in orthonormal coordinates, then coordinate ascent
    (lowest index first) from the best candidate until no step of relative
    size 1e-3 improves or ``budget`` ratio evaluations are spent.  Extra
    candidate polynomials can be passed in ``seeds``.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if n == 0:
        return 0.0
    axis = Axis.parse(axis)
    obj = _Objective(d, n, p, axis, q)
    m = polybasis.basis_size(n)
    rng = np.random.default_rng(seed)
    starts = [obj.coords(P.raised(n)) for P in seeds]
    n_random = max(1, min(budget // 4, 2048) - len(starts))
    cand = rng.standard_normal((m, n_random))
    if starts:
        cand = np.concatenate([np.stack(starts, axis=1), cand], axis=1)
    vals = obj(cand)
    evals = cand.shape[1]
    best = int(np.argmax(vals))
    u = cand[:, best] / np.linalg.norm(cand[:, best])
    val = float(vals[best])
    step = 0.5
    while evals < budget:
        improved = False
        for i in range(m):
            for sgn in (1.0, -1.0):
                trial = u.copy()
                trial[i] += sgn * step
                v = float(obj(trial)[0])
                evals += 1
                if v > val:
                    u, val, improved = trial / np.linalg.norm(trial), v, True
                    break
                if evals >= budget:
                    break
            if improved or evals >= budget:
                break
        if not improved:
            if step <= 1e-3:
                break
            step /= 2
    return val


def remez_ratio_p2(d: CuspidalDomain, n, x_lo, q: quad.QuadSpec = quad.DEFAULT_QUAD):
    """sup over degree <= n of ||P||_{L2(K)} / ||P||_{L2(K_{x_lo})}."""
    if not 0.0 <= x_lo < 1.0:
        raise ValueError("x_lo must lie in [0, 1)")
    if x_lo == 0.0:
        return 1.0
    GK = gram(d, FULL, n, q)
    GL = gram(d, SubdomainSpec(x_lo), n, q)
    bt = orthonormalize(GL)
    return _top_eig(GK.root @ bt.T)[0]


def witness_markov_ratio(d, n, p, omega, sigma=0.0, q: quad.QuadSpec = quad.DEFAULT_QUAD):
    """||dU_n/dy||_{L_p(K)} / ||U_n||_{L_p(K)}, a lower bound on the y-factor at degree n + 1."""
    spec = specfun.WitnessSpec(omega, sigma, n, p)
    num = quad.lp_norm(specfun.WitnessFunction(spec, 0), d, FULL, p, q)
    den = quad.lp_norm(specfun.WitnessFunction(spec, 1), d, FULL, p, q)
    return num / den


@dataclass
class FactorSeries:
    kind: SeriesKind
    p: float
    entries: list
    domain: dict
    method: Method
    x_lo: list = field(default_factory=list)

    @property
    def is_lower_bound(self):
        return self.method is not Method.EXACT

    def values(self):
        return np.array([v for _, v in self.entries])

    def degrees(self):
        return np.array([n for n, _ in self.entries])


def describe(d: CuspidalDomain):
    return {"a": d.a, "k": d.k, "family": d.f.family.value, "r": d.f.r, "b": d.f.b, "c": d.f.c}


def factor_series(
    d: CuspidalDomain,
    kind,
    p,
    n_range,
    method=Method.EXACT,
    q: quad.QuadSpec = quad.DEFAULT_QUAD,
    *,
    seed=0,
    budget=10_000,
    threads=1,
    x_lo=None,
    omega=None,
    sigma=0.0,
) -> FactorSeries:
    """Map the per-degree operation over ``n_range``.

    Remez series use x_lo = 1/n^2 unless ``x_lo`` overrides it.  On the first
    hard error the exception is re-raised with the entries computed so far in
    its ``partial`` attribute.
    """
    kind = SeriesKind(kind)
    method = Method(method)
    ns = sorted(int(n) for n in n_range)
    series = FactorSeries(kind, float(p), [], describe(d), method)
    if method is Method.EXACT and p != 2:
        raise ValueError("the exact eigen route is only available for p = 2")
    if kind is SeriesKind.REMEZ:
        if method is not Method.EXACT:
            raise ValueError("Remez series are computed by the eigen route only")
        if x_lo is None and ns and ns[0] < 2:
            raise ValueError("inverse-square truncation needs n >= 2")
    if method is Method.WITNESS and kind is not SeriesKind.MARKOV_Y:
        raise ValueError("the witness method applies to MarkovY series")

    big = None
    if method is Method.EXACT and ns:
        top = min(ns[-1], polybasis.DEGREE_CAP)
        try:
            big = gram(d, FULL, top, q)
        except MlabError as err:
            err.partial = series
            raise
    if method is Method.WITNESS and omega is None:
        omega = specfun.default_omega(p, d.k)

    def one(n):
        if kind is SeriesKind.REMEZ:
            lo = (1.0 / n**2) if x_lo is None else float(x_lo)
            return remez_ratio_p2(d, n, lo, q), lo
        if n == 0:
            return 0.0, None
        if method is Method.EXACT:
            polybasis.check_degree(n)
            return _factor_from_gram(big, n, kind.axis)[0], None
        if method is Method.SEARCH:
            return markov_factor_search(d, n, p, kind.axis, budget, seed, q), None
        return witness_markov_ratio(d, n, p, omega, sigma, q), None

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        futures = [pool.submit(one, n) for n in ns]
        for n, fut in zip(ns, futures):
            try:
                value, lo = fut.result()
            except MlabError as err:
                for f in futures:
                    f.cancel()
                err.partial = series
                raise
            series.entries.append((n, float(value)))
            if lo is not None:
                series.x_lo.append(lo)
    return series


@dataclass
class ExponentFit:
    slope: float
    intercept: float
    window: tuple
    residual_rms: float


def fit_exponent(s, window=None) -> ExponentFit:
    """Least-squares fit of ln value against ln n over the window.

    ``s`` is a FactorSeries or an iterable of (n, value) pairs; entries with
    n < 1 or value <= 0 are skipped.
    """
    entries = s.entries if isinstance(s, FactorSeries) else list(s)
    lo, hi = window if window is not None else (-math.inf, math.inf)
    pts = [(n, v) for n, v in entries if lo <= n <= hi and n >= 1 and v > 0]
    if len(pts) < 3:
        raise InsufficientDataError(
            f"need at least 3 positive entries in window {window}, got {len(pts)}"
        )
    x = np.log([n for n, _ in pts])
    y = np.log([v for _, v in pts])
    A = np.stack([x, np.ones_like(x)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ np.array([slope, intercept])
    used = (min(n for n, _ in pts), max(n for n, _ in pts))
    return ExponentFit(float(slope), float(intercept), used, float(np.sqrt(np.mean(resid**2))))
