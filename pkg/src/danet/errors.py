"""Exception types shared across the package.

All of these derive from ValueError so that callers who do not care about
the distinction can catch a single base class.
"""


class DanetError(ValueError):
    """Base class for all errors raised by this package."""


class ShapeError(DanetError):
    """Operands have incompatible or invalid dimensions."""


class SingularMatrixError(DanetError):
    """A regularized solve target is numerically singular."""


class EncodingError(DanetError):
    """Labels cannot be encoded as requested (e.g. out-of-range index)."""


class DataFormatError(DanetError):
    """An input file does not conform to its declared format."""


class ModelFormatError(DanetError):
    """A serialized model container is invalid or has the wrong version."""


class ConfigError(DanetError):
    """An experiment configuration field is missing or invalid."""
