"""Exception types shared across the package."""


class SegRnnError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(SegRnnError):
    """Operands have incompatible shapes."""


class ConfigError(SegRnnError):
    """A configuration value or combination of values is invalid."""


class ConsistencyError(SegRnnError):
    """A cached intermediate does not match the parameters it is used with."""


class DataError(SegRnnError):
    """Input data violates a requirement (e.g. constant channel)."""


class DataFormatError(SegRnnError):
    """A file on disk is malformed or cannot be parsed."""
