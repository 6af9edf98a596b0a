"""Exception hierarchy shared by every module of the package."""


class ActinError(Exception):
    """Base class for all errors raised by actin_rlc."""


class DomainError(ActinError, ValueError):
    """An input lies outside the mathematical domain of an operation."""


class ConfigError(ActinError, ValueError):
    """A configuration is malformed or semantically invalid.

    ``path`` names the offending key (e.g. ``"stimuli[2].cells"``) when known.
    """

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class NumericalError(ActinError, ArithmeticError):
    """The integration failed: blow-up, non-convergence, or a domain violation.

    ``time_ns`` and ``cell`` locate the failure when known. ``partial`` may hold
    the trace recorded up to the failure.
    """

    def __init__(self, message, time_ns=None, cell=None, residual=None):
        self.time_ns = time_ns
        self.cell = cell
        self.residual = residual
        self.partial = None
        where = []
        if cell is not None:
            where.append(f"cell {cell}")
        if time_ns is not None:
            where.append(f"t={time_ns:.6g} ns")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class CalibrationError(ActinError):
    """No candidate configuration separates the gate's ON and OFF levels."""

    def __init__(self, message, levels=None):
        self.levels = levels
        super().__init__(message)


class NonlinearityDomainError(NumericalError, DomainError):
    """The charge variable left the invertible branch, ``w > 1/(4b)``."""
