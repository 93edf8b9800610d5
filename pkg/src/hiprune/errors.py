"""Exception hierarchy shared by all hiprune modules."""


class HiPruneError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(HiPruneError):
    """A binary file does not conform to the ATNS/TOKM encoding."""


class GeometryError(HiPruneError):
    """Shapes, grids, or token counts are mutually inconsistent."""


class AttentionValidationError(HiPruneError):
    """Attention data violates row-stochasticity or value-range invariants."""


class BoundsError(HiPruneError, IndexError):
    """An index, count, or layer reference is out of range."""


class UnsupportedError(HiPruneError):
    """The requested operation is undefined for this input configuration."""
