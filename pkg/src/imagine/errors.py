"""Exception types shared across the package."""


class ImagineError(Exception):
    """Base class for all errors raised by this package."""


class ArchitectureError(ImagineError):
    """Invalid network architecture (empty layer list, nonpositive sizes, ...)."""


class DimensionError(ImagineError):
    """Shape or dimension mismatch between operands."""


class NumericsError(ImagineError):
    """Non-finite value encountered where a finite one is required."""


class FormatError(ImagineError):
    """Malformed binary file (bad magic, truncation, corrupt field)."""


class DataError(ImagineError):
    """Invalid data content (out-of-range pixels, bad labels, degenerate config)."""


class QueryError(ImagineError):
    """Unparseable or schema-inconsistent attribute query."""
