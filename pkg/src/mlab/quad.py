"""L_p norms over K and its truncations K_{x_lo}.

Integrals are taken in the (x, s) plane with y = s^k, which turns the cusp
region into {x_lo <= x <= 1, a^(1/k) x <= s <= f(x)^(1/k)} with weight
k s^(k-1).  In s the integrand of |P|^p is a polynomial when p is an even
integer, so a Gauss rule of the right order is exact; in x the panels are
graded geometrically toward the left edge.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .domain import CuspidalDomain, SubdomainSpec
from .errors import QuadratureBudgetError


@dataclass(frozen=True)
class QuadSpec:
    grading_ratio: float = 0.5
    num_graded_panels: int = 40
    # Floor for the Gauss order in s; raised automatically to the exactness
    # threshold of the active integrand.
    base_gauss_order: int = 0
    x_gauss_order: int = 24
    rel_tol: float = 1e-10
    p_adaptive: bool = True
    max_panels: int = 5000
    max_bisections: int = 60
    max_fibre_pieces: int = 1_000_000

    def __post_init__(self):
        if not 0 < self.grading_ratio < 1:
            raise ValueError("grading_ratio must lie in (0, 1)")
        if self.grading_ratio**self.num_graded_panels > 1e-12:
            raise ValueError(
                "grading_ratio**num_graded_panels must be <= 1e-12 so the "
                "panels reach the cusp"
            )
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")


DEFAULT_QUAD = QuadSpec()


def is_even_integer(p):
    return float(p).is_integer() and int(p) % 2 == 0


def _even_ceiling(p):
    pe = math.ceil(p)
    return pe + (pe % 2)


def s_order(k, p, deg_y, floor=0):
    """Gauss points in s exact for |P(x, s^k)|^p k s^(k-1) (p even)."""
    pe = _even_ceiling(p)
    return max(floor, math.ceil((pe * k * deg_y + k) / 2) + 1)


def x_order(k, p, degrees, floor=24):
    """Gauss points per x-panel.

    After exact integration in y, a product x^i y^j contributes terms of
    degree i + k (j + 1) in x (for upper boundaries no steeper than x^k).
    """
    dx, dy, tot = degrees
    pe = _even_ceiling(p)
    j = min(pe * dy, pe * tot)
    i = min(pe * dx, pe * tot - j)
    bound = i + k * (j + 1)
    return max(floor, math.ceil((bound + 1) / 2))


@lru_cache(maxsize=64)
def _gauss01(m):
    g, w = np.polynomial.legendre.leggauss(m)
    return (g + 1) / 2, w / 2


def x_panels(x_lo, q: QuadSpec):
    """Panel edges graded geometrically toward x_lo."""
    if x_lo >= 1.0:
        return np.empty(0)
    rho = q.grading_ratio ** np.arange(q.num_graded_panels, -1, -1)
    return np.concatenate([[x_lo], x_lo + (1.0 - x_lo) * rho])


def _fibre_bounds(d: CuspidalDomain, xs):
    s_lo = d.a ** (1.0 / d.k) * xs
    fx = np.maximum(d.f(xs), 0.0)
    s_hi = np.maximum(fx ** (1.0 / d.k), s_lo)
    return s_lo, s_hi


def _panel_rule(d, lo, hi, ms, mx, subdivide):
    gx, wx = _gauss01(mx)
    gs, ws = _gauss01(ms)
    sub = np.linspace(lo, hi, subdivide + 1)
    xs = (sub[:-1, None] + np.diff(sub)[:, None] * gx[None, :]).ravel()
    wxs = (np.diff(sub)[:, None] * wx[None, :]).ravel()
    s_lo, s_hi = _fibre_bounds(d, xs)
    t = (np.arange(subdivide)[:, None] + gs[None, :]).ravel() / subdivide
    wt = np.tile(ws, subdivide) / subdivide
    width = s_hi - s_lo
    s = s_lo[:, None] + width[:, None] * t[None, :]
    w = wxs[:, None] * width[:, None] * wt[None, :] * d.k * s ** (d.k - 1)
    x = np.broadcast_to(xs[:, None], s.shape)
    return x.ravel(), (s**d.k).ravel(), w.ravel()


@lru_cache(maxsize=32)
def tensor_rule(d: CuspidalDomain, x_lo, ms, mx, q: QuadSpec = DEFAULT_QUAD, subdivide=1):
    """Per-panel tensor rules ``[(x, y, w), ...]`` over K_{x_lo}.

    Each graded panel (and each fibre in s) is split into ``subdivide``
    equal pieces; 1 is the production rule.
    """
    edges = x_panels(x_lo, q)
    return tuple(
        _panel_rule(d, lo, hi, ms, mx, subdivide)
        for lo, hi in zip(edges[:-1], edges[1:])
    )


def pairwise_sum(items):
    """Deterministic tree reduction of a sequence of arrays or floats."""
    items = list(items)
    if not items:
        return 0.0
    while len(items) > 1:
        nxt = [items[i] + items[i + 1] for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


class _Constant:
    degrees = (0, 0, 0)

    def __init__(self, value=1.0):
        self.value = float(value)

    def eval(self, x, y):
        return np.full(np.shape(x), self.value)


def _degrees(P):
    return tuple(int(v) for v in P.degrees)


def _as_x_lo(sub):
    if isinstance(sub, SubdomainSpec):
        return float(sub.x_lo)
    return float(SubdomainSpec(float(sub)).x_lo)


def rule_for(d, P, p, x_lo, q: QuadSpec = DEFAULT_QUAD, subdivide=1):
    degs = _degrees(P)
    ms = s_order(d.k, p, degs[1], q.base_gauss_order)
    mx = x_order(d.k, p, degs, q.x_gauss_order)
    return tensor_rule(d, x_lo, ms, mx, q, subdivide)


def lp_integral(P, d: CuspidalDomain, sub, p, q: QuadSpec = DEFAULT_QUAD):
    """The integral of |P|^p over K_{x_lo} (no p-th root)."""
    if p < 1:
        raise ValueError("p must be >= 1")
    x_lo = _as_x_lo(sub)
    if x_lo >= 1.0:
        return 0.0
    if is_even_integer(p) or not q.p_adaptive:
        rule = rule_for(d, P, p, x_lo, q)
        # np.sum reduces contiguous arrays pairwise.
        parts = [np.sum(w * np.abs(P.eval(x, y)) ** p) for x, y, w in rule]
        return float(pairwise_sum(parts))
    return _adaptive_integral(P, d, x_lo, p, q)


def lp_norm(P, d: CuspidalDomain, sub, p, q: QuadSpec = DEFAULT_QUAD):
    """(integral over K_{x_lo} of |P|^p dx dy)^(1/p)."""
    return lp_integral(P, d, sub, p, q) ** (1.0 / p)


def area(d: CuspidalDomain, sub, q: QuadSpec = DEFAULT_QUAD):
    return lp_norm(_Constant(1.0), d, sub, 1, q)


def _fibre_integrals(P, d, xs, p, ms, q, tol, atol=0.0):
    """Adaptive bisection in s of |P(x, s^k)|^p k s^(k-1), one fibre per x.

    A piece is accepted when its error estimate is below its share of
    max(tol * fibre estimate, atol).  The absolute floor matters near the
    cusp, where P is evaluated with absolute rather than relative accuracy.
    Pieces on which P changes sign (seen at the nodes or the endpoints) are
    accepted only once their whole contribution is below that share: a kink
    close to an edge is invisible to both Gauss rules.
    """
    gs, ws = _gauss01(ms)
    nodes = np.concatenate([[0.0], gs, [1.0]])
    s_lo, s_hi = _fibre_bounds(d, xs)
    span = s_hi - s_lo

    def gauss(idx, lo, hi):
        s = lo[:, None] + (hi - lo)[:, None] * nodes[None, :]
        x = np.broadcast_to(xs[idx][:, None], s.shape)
        pv = P.eval(x, s**d.k)
        vals = np.abs(pv[:, 1:-1]) ** p * d.k * s[:, 1:-1] ** (d.k - 1)
        change = (pv.min(axis=1) < 0) & (pv.max(axis=1) > 0)
        return (hi - lo) * (vals @ ws), change

    idx = np.arange(xs.size)
    lo, hi = s_lo.copy(), s_hi.copy()
    coarse, _ = gauss(idx, lo, hi)
    scale = np.abs(coarse)
    out = np.zeros(xs.size)
    for _ in range(q.max_bisections):
        mid = (lo + hi) / 2
        left, lchange = gauss(idx, lo, mid)
        right, rchange = gauss(idx, mid, hi)
        fine = left + right
        err = np.abs(fine - coarse)
        frac = np.divide(hi - lo, span[idx], out=np.ones_like(lo), where=span[idx] > 0)
        # Pieces below 1/32 of the fibre keep a fixed share so that kinks of
        # |P|^p stop refining once the kink's own contribution is small.
        share = np.maximum(tol * scale[idx], atol) * np.maximum(frac, 1 / 32)
        done = (err <= share) & (~(lchange | rchange) | (fine <= share))
        np.add.at(out, idx[done], fine[done])
        keep = ~done
        if not keep.any():
            return out
        if 2 * int(keep.sum()) > q.max_fibre_pieces:
            break
        idx = np.concatenate([idx[keep], idx[keep]])
        lo, hi = (
            np.concatenate([lo[keep], mid[keep]]),
            np.concatenate([mid[keep], hi[keep]]),
        )
        coarse = np.concatenate([left[keep], right[keep]])
    raise QuadratureBudgetError(
        "fibre bisection did not converge", worst_estimate=float(err[keep].max())
    )


def _adaptive_integral(P, d, x_lo, p, q):
    degs = _degrees(P)
    ms = s_order(d.k, p, degs[1], q.base_gauss_order)
    mx = x_order(d.k, p, degs, q.x_gauss_order)
    gx, wx = _gauss01(mx)
    fibre_tol = q.rel_tol / 64
    # Fixed-rule estimate of the whole integral sets the absolute floor.
    rough = float(pairwise_sum(
        [np.sum(w * np.abs(P.eval(x, y)) ** p) for x, y, w in tensor_rule(d, x_lo, ms, mx, q)]
    ))
    fibre_atol = fibre_tol * rough / max(1.0 - x_lo, 1e-300)

    def panel_values(lo, hi):
        xs = (lo[:, None] + (hi - lo)[:, None] * gx[None, :]).ravel()
        fib = _fibre_integrals(P, d, xs, p, ms, q, fibre_tol, fibre_atol).reshape(lo.size, mx)
        return (hi - lo) * (fib @ wx)

    edges = x_panels(x_lo, q)
    lo, hi = edges[:-1], edges[1:]
    coarse = panel_values(lo, hi)
    total_width = 1.0 - x_lo
    accepted = []
    n_panels = lo.size
    while True:
        mid = (lo + hi) / 2
        both = panel_values(np.concatenate([lo, mid]), np.concatenate([mid, hi]))
        left, right = both[: lo.size], both[lo.size:]
        fine = left + right
        err = np.abs(fine - coarse)
        total = abs(float(pairwise_sum(accepted)) + float(np.sum(fine)))
        share = np.maximum((hi - lo) / total_width, 1 / 32)
        done = err <= q.rel_tol * np.maximum(total * share, np.abs(fine))
        accepted.extend(fine[done].tolist())
        keep = ~done
        if not keep.any():
            return float(pairwise_sum(sorted(accepted)))
        n_panels += 2 * int(keep.sum())
        if n_panels > q.max_panels:
            raise QuadratureBudgetError(
                f"x-panel budget {q.max_panels} exhausted",
                worst_estimate=float(err[keep].max()),
            )
        lo, hi = np.concatenate([lo[keep], mid[keep]]), np.concatenate([mid[keep], hi[keep]])
        coarse = np.concatenate([left[keep], right[keep]])


def convergence_order(d: CuspidalDomain, P, p, q: QuadSpec = DEFAULT_QUAD, levels=5, sub=0.0):
    """Empirical order of the fixed tensor rule under panel doublings.

    Panels in x and intervals in s are both split into 1, 2, 4, ... pieces.
    Returns ``math.inf`` when the error is below 1e-12 from the start
    (saturation, the expected outcome for even p).
    """
    x_lo = _as_x_lo(sub)
    ref = None
    if not is_even_integer(p):
        tight = dataclasses.replace(
            q, rel_tol=min(q.rel_tol, 1e-12), p_adaptive=True, max_panels=20 * q.max_panels
        )
        ref = _adaptive_integral(P, d, x_lo, p, tight)
    values = []
    for lev in range(levels):
        rule = rule_for(d, P, p, x_lo, q, subdivide=2**lev)
        values.append(float(pairwise_sum(
            [np.sum(w * np.abs(P.eval(x, y)) ** p) for x, y, w in rule]
        )))
    if ref is None:
        ref = values[-1]
    scale = abs(ref) if ref != 0 else 1.0
    errs = np.array([abs(v - ref) / scale for v in values])
    if is_even_integer(p):
        errs = errs[:-1]
    if np.all(errs < 1e-12):
        return math.inf
    rates = [
        math.log2(e0 / e1)
        for e0, e1 in zip(errs[:-1], errs[1:])
        if e0 > 1e-13 and e1 > 1e-13
    ]
    if not rates:
        return math.inf
    return float(np.median(rates))
