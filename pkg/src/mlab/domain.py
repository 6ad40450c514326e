"""Cuspidal planar domains K = {0 <= x <= 1, a x^k <= y <= f(x)}.

The upper boundary f comes from a small gallery of closed-form families
(plus a caller-supplied ``Custom`` escape hatch).  Hypotheses on f are
certified numerically on a grid graded geometrically toward the cusp.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainHypothesisError, ParameterDomainError


class Family(str, enum.Enum):
    POWER = "Power"
    LOGLOG = "LogLog"
    NEGLOG = "NegLog"
    LOGPOWER = "LogPower"
    CUSTOM = "Custom"


class ExponentModel(str, enum.Enum):
    PLAIN_LIMIT = "PlainLimit"
    INVERSE_LOG = "InverseLog"
    INVERSE_LOG_PLUS_LOG_LOG = "InverseLogPlusLogLog"


class LimitValue(float):
    """A float returned in place of a formula that is only defined as a limit."""

    is_limit = True


@dataclass(frozen=True)
class CuspFunction:
    """Upper boundary f of the domain.

    Power:    f(x) = b x^r
    LogLog:   f(x) = x^r ln(-ln(b x)),   0 < b < 1/e
    NegLog:   f(x) = -x^r ln(b x),       0 < b <= 1/e
    LogPower: f(x) = x^r (-ln(b x))^c,   0 < b < 1
    Custom:   ``fn`` (and optionally ``dfn``) supplied by the caller.

    All log families are extended by 0 at x = 0.
    """

    family: Family
    r: float = 2.0
    b: float = 1.0
    c: float = 1.0
    fn: Optional[Callable] = field(default=None)
    dfn: Optional[Callable] = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        fam = self.family
        if fam is Family.CUSTOM:
            if self.fn is None:
                raise ParameterDomainError("Custom family needs an evaluator fn")
            return
        if not self.r > 0:
            raise ParameterDomainError(f"{fam.value}: r={self.r} makes x^r undefined at 0")
        b = self.b
        if fam is Family.LOGLOG and not (0 < b < math.exp(-1)):
            raise ParameterDomainError(f"LogLog needs 0 < b < 1/e, got b={b}")
        if fam is Family.NEGLOG and not (0 < b <= math.exp(-1)):
            raise ParameterDomainError(f"NegLog needs 0 < b <= 1/e, got b={b}")
        if fam is Family.LOGPOWER and not (0 < b < 1):
            raise ParameterDomainError(f"LogPower needs 0 < b < 1, got b={b}")

    @classmethod
    def power(cls, r, b=1.0):
        return cls(Family.POWER, r=r, b=b)

    @classmethod
    def loglog(cls, r, b):
        return cls(Family.LOGLOG, r=r, b=b)

    @classmethod
    def neglog(cls, r, b):
        return cls(Family.NEGLOG, r=r, b=b)

    @classmethod
    def logpower(cls, r, b, c):
        return cls(Family.LOGPOWER, r=r, b=b, c=c)

    @classmethod
    def custom(cls, fn, dfn=None):
        return cls(Family.CUSTOM, fn=fn, dfn=dfn)

    @property
    def has_derivative(self):
        return self.family is not Family.CUSTOM or self.dfn is not None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        fam, r, b = self.family, self.r, self.b
        if fam is Family.CUSTOM:
            return np.asarray(self.fn(x), dtype=float)
        if fam is Family.POWER:
            return b * x**r
        pos = x > 0
        xs = np.where(pos, x, 1.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            mlog = -np.log(b * xs)
            if fam is Family.LOGLOG:
                val = xs**r * np.log(mlog)
            elif fam is Family.NEGLOG:
                val = xs**r * mlog
            else:
                val = xs**r * mlog**self.c
        return np.where(pos, val, 0.0)

    def derivative(self, x):
        """Closed-form f'(x) for x > 0."""
        x = np.asarray(x, dtype=float)
        fam, r, b = self.family, self.r, self.b
        if fam is Family.CUSTOM:
            if self.dfn is None:
                raise ParameterDomainError("Custom family has no derivative evaluator")
            return np.asarray(self.dfn(x), dtype=float)
        if fam is Family.POWER:
            return b * r * x ** (r - 1)
        mlog = -np.log(b * x)
        if fam is Family.LOGLOG:
            return x ** (r - 1) * (r * np.log(mlog) - 1.0 / mlog)
        if fam is Family.NEGLOG:
            return x ** (r - 1) * (r * mlog - 1.0)
        return x ** (r - 1) * mlog ** (self.c - 1) * (r * mlog - self.c)


@dataclass(frozen=True)
class CuspidalDomain:
    a: float
    k: int
    f: CuspFunction

    def __post_init__(self):
        if not self.a > 0:
            raise ParameterDomainError(f"a must be positive, got {self.a}")
        if int(self.k) != self.k or self.k < 2:
            raise ParameterDomainError(f"k must be an integer >= 2, got {self.k}")
        object.__setattr__(self, "k", int(self.k))

    @property
    def y_max(self):
        """Height of the bounding box [0,1] x [0, y_max]."""
        grid = np.linspace(0.0, 1.0, 257)
        return float(max(np.max(self.f(grid)), self.a))

    def lower(self, x):
        return self.a * np.asarray(x, dtype=float) ** self.k

    def upper(self, x):
        return self.f(x)


@dataclass(frozen=True)
class SubdomainSpec:
    """Left truncation K_{x_lo} = K intersected with {x >= x_lo}.

    x_lo = 1 is accepted as the degenerate empty strip.
    """

    x_lo: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.x_lo <= 1.0):
            raise ParameterDomainError(f"x_lo must lie in [0, 1), got {self.x_lo}")


FULL = SubdomainSpec(0.0)


@dataclass
class Check:
    name: str
    passed: bool
    worst_x: Optional[float]
    worst_value: Optional[float]

    def as_dict(self):
        return {
            "name": self.name,
            "passed": self.passed,
            "worst_x": self.worst_x,
            "worst_value": self.worst_value,
        }


@dataclass
class ValidityReport:
    checks: list

    @property
    def valid(self):
        return all(c.passed for c in self.checks)

    @property
    def failed(self):
        return [c.name for c in self.checks if not c.passed]

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self):
        return {
            "valid": self.valid,
            "failed": self.failed,
            "checks": [c.as_dict() for c in self.checks],
        }


def graded_grid(grid_points, smallest=1e-12):
    """0 followed by ``grid_points - 1`` points geometric in [smallest, 1]."""
    return np.concatenate([[0.0], np.geomspace(smallest, 1.0, grid_points - 1)])


def _second_divided(x, v):
    d1 = np.diff(v) / np.diff(x)
    dd = np.diff(d1) / (x[2:] - x[:-2])
    scale = (np.abs(d1[1:]) + np.abs(d1[:-1])) / (x[2:] - x[:-2])
    return dd, scale


def _worst(passed_mask, margin, x):
    i = int(np.argmin(margin))
    return Check("", bool(np.all(passed_mask)), float(x[i]), float(margin[i]))


def validate(d: CuspidalDomain, grid_points=1024, tol=1e-9) -> ValidityReport:
    if grid_points < 16:
        raise ValueError("grid_points must be >= 16")
    if not tol > 0:
        raise ValueError("tol must be positive")
    x = graded_grid(grid_points)
    fx = d.f(x)
    if not np.all(np.isfinite(fx[1:])):
        bad = x[1:][~np.isfinite(fx[1:])]
        raise ParameterDomainError(f"f undefined at x={bad[0]:.3g}")
    checks = []

    def add(name, check):
        check.name = name
        checks.append(check)

    f0 = float(fx[0])
    add("f(0)=0", Check("", abs(f0) <= tol, 0.0, f0))

    # f(h)/h -> 0: the quotient must decay like a positive power of h over the
    # smallest decade of the grid.
    h = x[1:][x[1:] <= 1e-11]
    if h.size < 2:
        h = x[1:4]
    q = d.f(h) / h
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = np.polyfit(np.log(h), np.log(np.abs(q) + 1e-300), 1)[0]
    ok = bool(np.all(np.diff(q) >= -tol * np.abs(q[1:])) and slope > 1e-3)
    add("f'(0)=0", Check("", ok, float(h[0]), float(q[0])))

    if d.f.has_derivative:
        f1p = float(d.f.derivative(1.0))
    else:
        eps = 1e-6
        f1p = float((d.f(1.0) - d.f(1.0 - eps)) / eps)
    add("f'(1)<inf", Check("", math.isfinite(f1p), 1.0, f1p))

    f1 = float(d.f(1.0))
    add("f(1)>a", Check("", f1 > d.a, 1.0, f1 - d.a))

    dd, scale = _second_divided(x, fx)
    margin = dd + tol * scale
    add("f convex", _worst(margin >= 0, margin, x[1:-1]))

    with np.errstate(invalid="ignore"):
        g = np.where(fx >= 0, np.abs(fx) ** (1.0 / d.k), np.nan)
    dd, scale = _second_divided(x, g)
    margin = np.where(np.isfinite(dd), -dd + tol * scale, -np.inf)
    add("f^(1/k) concave", _worst(margin >= 0, margin, x[1:-1]))

    lo = d.lower(x)
    margin = fx - lo + tol * np.abs(fx)
    add("a*x^k<=f(x)", _worst(margin >= 0, margin, x))

    xp = x[1:]
    if d.f.has_derivative:
        fp = d.f.derivative(xp)
    else:
        fp = np.gradient(fx[1:], xp)
    kf = d.k * fx[1:]
    margin = kf - xp * fp + tol * (np.abs(kf) + np.abs(xp * fp))
    add("kf>=xf'", _worst(margin >= 0, margin, xp))
    return ValidityReport(checks)


def eval_boundaries(d: CuspidalDomain, x):
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"x={x} outside [0, 1]")
    return float(d.lower(x)), float(d.f(x))


def f_prime(d: CuspidalDomain, x):
    """f'(x) from the closed form of the family.

    At x = 0 the formulas may be 0/0; the hypothesised limit 0 is returned as
    a :class:`LimitValue`.
    """
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"x={x} outside [0, 1]")
    if x == 0.0:
        return LimitValue(0.0)
    return float(d.f.derivative(x))


def membership(d: CuspidalDomain, x, y):
    """Closed-set test; boundary values within a few ulps count as inside."""
    if not (0.0 <= x <= 1.0):
        return False
    lo, hi = float(d.lower(x)), float(d.f(x))
    y = float(y)
    return lo - 4 * math.ulp(lo) <= y <= hi + 4 * math.ulp(hi)


@dataclass
class ExponentEstimate:
    raw_sequence: list
    extrapolated: float
    model: ExponentModel
    residual: float


def default_model(f: CuspFunction) -> ExponentModel:
    if f.family is Family.POWER:
        return ExponentModel.INVERSE_LOG
    return ExponentModel.INVERSE_LOG_PLUS_LOG_LOG


def tau_sequence(d: CuspidalDomain, ns):
    """tau_n = 2 - ln f'(1/n^2) / ln n."""
    ns = np.asarray(ns, dtype=float)
    fp = d.f.derivative(1.0 / ns**2)
    if np.any(~(fp > 0)):
        bad = ns[~(fp > 0)][0]
        raise DomainHypothesisError(f"f'(1/n^2) <= 0 at n={int(bad)}")
    return 2.0 - np.log(fp) / np.log(ns)


def predicted_exponent(d: CuspidalDomain, n_max=2**20, model=None) -> ExponentEstimate:
    """Exponent predicted by inf{tau : n^2 <= C f'(1/n^2) n^tau}.

    tau_n is evaluated on n = 2, 4, ..., n_max and extrapolated by least
    squares against the model basis; the constant term is the estimate.
    """
    if n_max < 16:
        raise ValueError("n_max must be >= 16")
    model = ExponentModel(model) if model is not None else default_model(d.f)
    ns = 2.0 ** np.arange(1, int(math.floor(math.log2(n_max))) + 1)
    tau = tau_sequence(d, ns)
    ln = np.log(ns)
    cols = [np.ones_like(ln)]
    if model is not ExponentModel.PLAIN_LIMIT:
        cols.append(1.0 / ln)
    if model is ExponentModel.INVERSE_LOG_PLUS_LOG_LOG:
        cols.append(np.log(ln) / ln)
    A = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(A, tau, rcond=None)
    resid = tau - A @ coef
    return ExponentEstimate(
        raw_sequence=[(int(n), float(t)) for n, t in zip(ns, tau)],
        extrapolated=float(coef[0]),
        model=model,
        residual=float(np.sqrt(np.mean(resid**2))),
    )
