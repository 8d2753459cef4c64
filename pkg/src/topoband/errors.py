"""Exception types shared by all modules.

Two families are distinguished because the command line maps them to
different exit codes: bad input (2) and numerical failure (3).
"""


class TopobandError(Exception):
    """Base class for all package errors."""


class InputError(TopobandError, ValueError):
    """Invalid structure, parameter or precondition supplied by the caller."""


class PreconditionError(InputError):
    """A mathematical precondition of the requested operation does not hold.

    Examples are asking for a parity on a non-symmetric cell or asking for
    a gap-only quantity at an energy inside a band.
    """


class NumericalError(TopobandError, ArithmeticError):
    """A computation did not converge or failed an internal consistency check."""


class NoConvergence(NumericalError):
    """An iterative solver exhausted its budget without meeting tolerance."""
