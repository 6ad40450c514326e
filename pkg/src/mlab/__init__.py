"""Markov-type inequalities for polynomials on cuspidal plane domains."""

from .domain import (
    CuspFunction,
    CuspidalDomain,
    ExponentModel,
    Family,
    SubdomainSpec,
    predicted_exponent,
    validate,
)
from .errors import (
    ConditioningError,
    DomainHypothesisError,
    InsufficientDataError,
    MlabError,
    NumericalError,
    ParameterDomainError,
    QuadratureBudgetError,
)
from .markov import (
    FactorSeries,
    factor_series,
    fit_exponent,
    markov_factor_p2,
    markov_factor_search,
    remez_ratio_p2,
)
from .polybasis import Axis, Poly2, gram, orthonormalize
from .quad import QuadSpec, area, lp_norm

__version__ = "0.1.0"
