"""Exception types shared across the package.

Every error raised on purpose derives from :class:`DaqcError`, so callers
(the CLI in particular) can map failures to exit codes without catching
unrelated bugs.
"""


class DaqcError(Exception):
    """Base class for all package errors."""


class ConfigError(DaqcError, ValueError):
    """A configuration value violates its documented invariants."""


class DataError(DaqcError, ValueError):
    """Input data is missing, empty, or unusable for the requested step."""


class FormatError(DataError):
    """A dataset file does not follow the IDX layout."""


class CapacityError(DaqcError, ValueError):
    """The request exceeds the simulator's size or memory limits."""


class ShapeError(DaqcError, ValueError):
    """Array shapes or lengths are inconsistent."""


class NumericError(DaqcError, ValueError):
    """A numeric argument is NaN or infinite."""


class LabelError(DaqcError, ValueError):
    """A class label lies outside ``[0, n_classes)``."""


class DomainError(DaqcError, ValueError):
    """An argument lies outside the domain of a function."""


class QubitIndexError(DaqcError, IndexError):
    """A qubit index is out of range or a gate's wires coincide."""
