"""Exception hierarchy shared by the numerical modules and the CLI.

Each class carries the CLI exit code it maps to, so the front-end never has
to pattern-match on messages.
"""


class MlabError(Exception):
    exit_code = 1

    def __init__(self, message, *, partial=None):
        super().__init__(message)
        # Set by series-producing operations that abort midway.
        self.partial = partial


class ParameterDomainError(MlabError, ValueError):
    """A parameter puts a function outside its domain of definition."""

    exit_code = 2


class DomainHypothesisError(MlabError):
    exit_code = 3


class NumericalError(MlabError):
    exit_code = 4


class ConditioningError(NumericalError):
    def __init__(self, message, *, degree=None, condition=None, partial=None):
        super().__init__(message, partial=partial)
        self.degree = degree
        self.condition = condition


class QuadratureBudgetError(NumericalError):
    def __init__(self, message, *, worst_estimate=None, partial=None):
        super().__init__(message, partial=partial)
        self.worst_estimate = worst_estimate


class InsufficientDataError(MlabError):
    exit_code = 5


class ConfigError(MlabError):
    exit_code = 2
