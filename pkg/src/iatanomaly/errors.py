"""Exception types shared across the package."""


class IatError(Exception):
    """Base class for all package errors."""


class DomainError(IatError, ValueError):
    """An argument lies outside the domain of the function."""


class SingularityError(DomainError):
    """A density is unbounded at the requested point."""


class DegenerateFitError(IatError):
    """The data cannot identify the model (e.g. every value identical)."""


class InsufficientDataError(IatError):
    """Too few observations for the requested fit."""


class GroupFitError(IatError):
    """The group-level fit failed; carries per-user diagnostics."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ConfigError(IatError, ValueError):
    """One or more configuration fields are invalid."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration: " + "; ".join(self.problems))
