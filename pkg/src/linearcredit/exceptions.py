"""Exception hierarchy shared by every module.

The command-line front end maps these onto exit codes: validation-type
errors exit with 2 and capacity errors exit with 3.
"""

from __future__ import annotations


class LinearCreditError(Exception):
    """Base class for all library errors."""


class InvalidInputError(LinearCreditError, ValueError):
    """Malformed or out-of-range input (shapes, NaNs, negative horizons)."""


class ConstraintError(InvalidInputError):
    """A model parameter constraint is violated."""


class DomainError(InvalidInputError):
    """A formula is evaluated outside its domain of definition."""


class DegenerateError(InvalidInputError):
    """A ratio or interval degenerates (zero annuity, empty support)."""


class EmptyPortfolioError(InvalidInputError):
    """Every firm in the portfolio has already defaulted."""


class CalibrationError(LinearCreditError):
    """No multistart run produced an admissible parameter set."""


class CapacityError(LinearCreditError, RuntimeError):
    """A configured size limit (degree, firm count, memory) is exceeded."""
