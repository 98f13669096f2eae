"""Exception hierarchy shared by all modules.

The CLI maps :class:`ValidationError` to exit status 2 and
:class:`ConvergenceError` to exit status 3.
"""


class KornShellError(Exception):
    """Base class for package errors."""


class ValidationError(KornShellError, ValueError):
    """Invalid input: bad parameters, points outside the domain, empty sets."""


class ConvergenceError(KornShellError, RuntimeError):
    """An iterative solver hit its iteration cap or broke down."""


class MemoryBudgetError(KornShellError, MemoryError):
    """Assembly would exceed the declared memory cap."""
