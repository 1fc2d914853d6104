"""Exception hierarchy shared by every module and mapped to CLI exit codes."""


class InfogapError(Exception):
    """Base class for all package errors."""


class ConfigurationError(InfogapError, ValueError):
    """Invalid shapes, sizes or parameter combinations (exit code 2)."""


class ValidationError(InfogapError, ValueError):
    """An input violates a documented precondition (exit code 2)."""


class FormatError(InfogapError, ValueError):
    """A file does not follow the expected binary layout (exit code 2)."""


class BudgetError(ConfigurationError):
    """An exact enumeration would exceed its size budget."""


class DomainError(InfogapError, ValueError):
    """A scalar argument lies outside the domain of a formula."""


class NumericError(InfogapError, ArithmeticError):
    """Non-finite values produced during computation (exit code 3)."""
