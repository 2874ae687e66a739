"""Exception types shared across the package.

Each carries the CLI exit code it maps to so the command layer does not need
a lookup table.
"""


class SeqtapeError(Exception):
    exit_code = 1


class InvalidInput(SeqtapeError, ValueError):
    """Malformed input: wrong shapes, negative weights, bad dimensions."""

    exit_code = 2


class ShapeError(InvalidInput):
    pass


class NotTracePreserving(InvalidInput):
    pass


class NotIsometry(InvalidInput):
    pass


class NotCanonical(InvalidInput):
    def __init__(self, message: str, site: int | None = None):
        super().__init__(message)
        self.site = site


class NotStochastic(InvalidInput):
    pass


class RouteRefused(SeqtapeError):
    """The requested compilation route cannot realize the state deterministically."""

    exit_code = 3


class CapExceeded(SeqtapeError):
    exit_code = 4


class DecouplingError(SeqtapeError):
    """A circuit flagged as decoupled left the correlator entangled with the tape."""


class FactorizationError(SeqtapeError):
    def __init__(self, message: str, site: int | None = None):
        super().__init__(message)
        self.site = site


class MachineError(SeqtapeError):
    """Illegal machine step: halted control, head out of range, unknown gate."""


class CycleError(InvalidInput):
    pass
