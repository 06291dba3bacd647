"""Exception types shared across the package."""


class DelayCoverError(Exception):
    """Base class for all package errors."""


class OutOfDomainError(DelayCoverError):
    """Evaluation time outside the domain of a state or trajectory."""


class NonFiniteStateError(DelayCoverError):
    """A trajectory left the finite range (blow-up or invalid operand)."""


class LayoutMismatchError(DelayCoverError):
    """Observable layout inconsistent with a state, system, or data shape."""


class DiscardedPointError(DelayCoverError):
    """A test point produced a non-finite image and must be dropped."""


class EmptyCollectionError(DelayCoverError):
    """Every box was discarded during selection.

    Carries the empty collection and the partial report so callers can
    still write diagnostics.
    """

    def __init__(self, message, collection=None, report=None):
        super().__init__(message)
        self.collection = collection
        self.report = report


class EmptyInputError(DelayCoverError):
    """An operation that needs a nonempty point set received an empty one."""


class InsufficientDataError(DelayCoverError):
    """Not enough coverings/depths to carry out an estimate."""


class ConfigError(DelayCoverError):
    """Malformed or inconsistent configuration file."""
